"""
Collision kinematics of a classical electron and a traveling phonon packet.

Sign convention: the positive lab axis points along the incident electron
motion. In a head-on collision the packet moves with velocity -υ, in a
co-moving collision with +υ. The barrier is the envelope maximum q·V̄₀/√2.
"""

import logging
from enum import StrEnum, auto
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field, model_validator
from scipy.constants import e as elementary_charge
from scipy.constants import m_e

from phonontide.toolbox.exceptions import NoCollisionError, TrappedOrbitError
from phonontide.toolbox.lattice import (ENVELOPE_PREFACTOR, PhononPacket,
                                        envelope_shape,
                                        envelope_shape_derivative)

logger = logging.getLogger(__name__)

DEFAULT_TIME_STEP = 1e-3
DEFAULT_MAX_STEPS = 2_000_000
EXIT_PERIODS = 4  # the oracle starts and stops at |s| = EXIT_PERIODS·π, zeros of the shape


class Geometry(StrEnum):
    HEAD_ON = auto()
    CO_MOVING = auto()


class OutcomeKind(StrEnum):
    PASSED = auto()
    REBOUNDED = auto()


class ElectronState(BaseModel):
    """A classical electron.

    Attributes:
        v (float): Signed lab velocity (1D) or speed (2D) [m/s]
        theta (float | None): Incidence angle to the tide in the 2D picture [rad].
          theta = 0 is grazing, theta = pi/2 is head-on
        mass (float): Electron mass [kg]
        charge (float): Charge magnitude [C]"""

    v: float
    theta: Optional[float] = Field(default=None, ge=0, le=np.pi / 2)
    mass: float = Field(default=m_e, gt=0)
    charge: float = Field(default=elementary_charge, gt=0)

    @model_validator(mode="after")
    def check_finite_velocity(self):
        if not np.isfinite(self.v):
            raise ValueError(f"The electron velocity must be finite, got {self.v}")

        return self

    @property
    def kinetic_energy(self) -> float:
        return 0.5 * self.mass * self.v**2


class CollisionOutcome(BaseModel):
    """The result of a single collision.

    Attributes:
        kind (OutcomeKind): Passed or rebounded
        v_out (float): Outgoing lab velocity along the incident direction [m/s]
        v_parallel (float | None): Outgoing component parallel to the tide (2D only)
        v_perpendicular (float | None): Outgoing component normal to the tide (2D only)
        forward_change_factor (float | None): Loss of forward velocity relative to
          the incident speed, 1 - cos(2θ) on a rebound (2D only)
        stationary_tide (bool): Whether the tide was treated as stationary
        delta_e_electron (float): Energy change of the electron [J]
        delta_e_phonon (float): Energy change of the phonon bath [J]"""

    kind: OutcomeKind
    v_out: float
    v_parallel: Optional[float] = None
    v_perpendicular: Optional[float] = None
    forward_change_factor: Optional[float] = None
    stationary_tide: bool = False
    delta_e_electron: float
    delta_e_phonon: float

    @model_validator(mode="after")
    def check_energy_balance(self):
        if self.delta_e_electron + self.delta_e_phonon != 0:
            raise ValueError(
                "The energy exchanged between electron and phonon must sum to zero, got "
                f"{self.delta_e_electron} and {self.delta_e_phonon}"
            )

        return self


class TransitOutcome(CollisionOutcome):
    """Outcome of a numerically integrated transit.

    Attributes:
        energy_drift (float): Relative energy error at the exit point
        steps (int): Number of integration steps"""

    energy_drift: float
    steps: int


class CollisionRecord(BaseModel):
    """A row of a collision sweep. kind is None when no collision takes place."""

    v_g: float
    upsilon: float
    barrier: float
    kind: Optional[OutcomeKind]
    v_out: float
    delta_e: float


def barrier_energy(packet: PhononPacket, charge: float = elementary_charge) -> float:
    """The barrier q·V̄₀/√2 [J]"""
    return charge * packet.barrier_height


def packet_velocity(packet: PhononPacket, geometry: Geometry) -> float:
    """Lab velocity of the packet for the given geometry"""
    if geometry == Geometry.HEAD_ON:
        return -packet.upsilon

    return packet.upsilon


def _relative_velocity(e: ElectronState, packet: PhononPacket, geometry: Geometry) -> float:
    if e.v <= 0:
        raise ValueError(f"The electron must move along the positive axis, got v = {e.v}")

    w = e.v - packet_velocity(packet, geometry)

    if w <= 0:
        raise NoCollisionError(
            f"A co-moving electron with v = {e.v} m/s never reaches a packet moving at "
            f"{packet.upsilon} m/s"
        )

    return w


def _outcome(e: ElectronState, kind: OutcomeKind, v_out: float, **kwargs) -> dict:
    delta_e = 0.5 * e.mass * (v_out**2 - e.v**2)
    return dict(kind=kind, v_out=v_out, delta_e_electron=delta_e, delta_e_phonon=-delta_e, **kwargs)


def collide_1d(e: ElectronState, packet: PhononPacket, geometry: Geometry) -> CollisionOutcome:
    """Collides an electron with a rigid packet in one dimension.

    In the packet frame the electron approaches with w = v - u, where u is the
    packet velocity. It passes if ½mw² >= barrier and keeps its lab velocity.
    Otherwise it is reflected in the packet frame, giving v_out = 2u - v in the
    lab frame. A head-on rebound leaves with speed v + 2υ, a co-moving
    rebound with |v - 2υ|.

    Args:
        e: The electron, with e.v > 0
        packet: The phonon packet
        geometry: Head-on or co-moving

    Returns:
        The CollisionOutcome"""

    w = _relative_velocity(e, packet, geometry)

    if 0.5 * e.mass * w**2 >= barrier_energy(packet, e.charge):
        return CollisionOutcome(**_outcome(e, OutcomeKind.PASSED, e.v))

    u = packet_velocity(packet, geometry)
    return CollisionOutcome(**_outcome(e, OutcomeKind.REBOUNDED, 2 * u - e.v))


def collide_oblique(e: ElectronState, packet: PhononPacket) -> CollisionOutcome:
    """Collides an electron with a stationary tide at the incidence angle e.theta.

    Only the velocity component normal to the tide, v·sin θ, has to climb the
    barrier. On a rebound this component is reversed while the parallel
    component v·cos θ is kept, so the speed is unchanged and the forward
    velocity drops by v·(1 - cos 2θ).

    Args:
        e: The electron with its speed and incidence angle
        packet: The phonon packet forming the tide

    Returns:
        The CollisionOutcome, flagged as a stationary tide"""

    if e.theta is None:
        raise ValueError("An oblique collision requires the incidence angle theta")

    speed = abs(e.v)
    v_parallel = speed * np.cos(e.theta)
    v_perpendicular = speed * np.sin(e.theta)

    if 0.5 * e.mass * v_perpendicular**2 < barrier_energy(packet, e.charge):
        kind = OutcomeKind.REBOUNDED
        v_perpendicular_out = -v_perpendicular
        forward_change_factor = 1 - np.cos(2 * e.theta)
    else:
        kind = OutcomeKind.PASSED
        v_perpendicular_out = v_perpendicular
        forward_change_factor = 0.0

    v_forward = v_parallel * np.cos(e.theta) + v_perpendicular_out * np.sin(e.theta)

    return CollisionOutcome(
        kind=kind,
        v_out=v_forward,
        v_parallel=v_parallel,
        v_perpendicular=v_perpendicular_out,
        forward_change_factor=forward_change_factor,
        stationary_tide=True,
        delta_e_electron=0.0,
        delta_e_phonon=0.0,
    )


def collision_sweep(
    v_values: ArrayLike,
    upsilon_values: ArrayLike,
    packet: PhononPacket,
    geometry: Geometry,
    mass: float = m_e,
    charge: float = elementary_charge,
) -> list[CollisionRecord]:
    """Evaluates collide_1d on the grid of electron velocities and packet speeds.

    The packet amplitude is kept; only its speed is replaced. Co-moving
    electrons that never reach the packet are recorded with kind None."""

    records = []

    for upsilon in np.asarray(upsilon_values, dtype=float):
        moving = packet.model_copy(update={"upsilon": float(upsilon)})
        barrier = barrier_energy(moving, charge)

        for v in np.asarray(v_values, dtype=float):
            e = ElectronState(v=float(v), mass=mass, charge=charge)

            try:
                outcome = collide_1d(e, moving, geometry)
            except NoCollisionError:
                records.append(
                    CollisionRecord(
                        v_g=v, upsilon=upsilon, barrier=barrier, kind=None, v_out=v, delta_e=0.0
                    )
                )
                continue

            records.append(
                CollisionRecord(
                    v_g=v,
                    upsilon=upsilon,
                    barrier=barrier,
                    kind=outcome.kind,
                    v_out=outcome.v_out,
                    delta_e=outcome.delta_e_electron,
                )
            )

    return records


def reduced_velocity_scale(packet: PhononPacket, mass: float, charge: float) -> float:
    """Velocity corresponding to a unit reduced speed, sqrt(q·c·V̄₀/m) [m/s].

    With s = k_max·x/2 and the time unit τ = (2/k_max)·sqrt(m/(q·c·V̄₀)), the
    packet-frame equation of motion becomes s'' = -φ'(s), with φ = sin²(s)/s
    and c the envelope prefactor."""
    return np.sqrt(charge * ENVELOPE_PREFACTOR * packet.vbar0 / mass)


def brute_force_sweep(
    w_values: ArrayLike,
    packet: PhononPacket,
    mass: float = m_e,
    charge: float = elementary_charge,
    dt: float = DEFAULT_TIME_STEP,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> tuple[list[Optional[OutcomeKind]], np.ndarray, np.ndarray, np.ndarray]:
    """Integrates Newton's equations through the packet for many packet-frame speeds.

    All electrons start at s = -Kπ moving in the positive direction and are
    advanced together with velocity Verlet in reduced units. An electron is
    done once it leaves [-Kπ, Kπ]. The asymptotic speed is recovered from the
    energy at the exit point.

    Args:
        w_values: Incident packet-frame velocities, all positive [m/s]
        packet: The phonon packet
        mass: Electron mass [kg]
        charge: Charge magnitude [C]
        dt: Time step in reduced units
        max_steps: Step budget; electrons still inside afterwards are trapped

    Returns:
        A tuple (kinds, w_out, energy_drift, steps). The kind of a trapped orbit
        is None and its w_out is nan."""

    w = np.atleast_1d(np.asarray(w_values, dtype=float))

    if np.any(w <= 0):
        raise ValueError("All packet-frame velocities must be positive")

    if packet.vbar0 == 0:
        return [OutcomeKind.PASSED] * len(w), w.copy(), np.zeros(len(w)), np.zeros(len(w), int)

    scale = reduced_velocity_scale(packet, mass, charge)
    s_exit = EXIT_PERIODS * np.pi

    sigma0 = w / scale
    energy0 = 0.5 * sigma0**2

    # Compressed state of the electrons still inside the packet
    active = np.arange(len(w))
    s = np.full(len(w), -s_exit)
    sigma = sigma0.copy()
    acc = -envelope_shape_derivative(s)

    s_end = np.full(len(w), np.nan)
    sigma_end = np.full(len(w), np.nan)
    steps = np.full(len(w), max_steps)

    for step in range(1, max_steps + 1):
        sigma_half = sigma + 0.5 * dt * acc
        s = s + dt * sigma_half
        acc = -envelope_shape_derivative(s)
        sigma = sigma_half + 0.5 * dt * acc

        left = np.abs(s) > s_exit
        if np.any(left):
            s_end[active[left]] = s[left]
            sigma_end[active[left]] = sigma[left]
            steps[active[left]] = step

            keep = ~left
            active, s, sigma, acc = active[keep], s[keep], sigma[keep], acc[keep]

            if len(active) == 0:
                break

    if len(active):
        logger.warning(f"{len(active)} orbit(s) still inside the packet after {max_steps} steps")

    exit_energy = 0.5 * sigma_end**2 + envelope_shape(s_end)
    energy_drift = np.abs(exit_energy - energy0) / energy0

    sigma_out = np.sign(s_end) * np.sqrt(np.maximum(2 * exit_energy, 0.0))
    w_out = sigma_out * scale

    kinds = [
        None if np.isnan(end) else (OutcomeKind.PASSED if end > 0 else OutcomeKind.REBOUNDED)
        for end in s_end
    ]

    logger.debug(f"Integrated {len(w)} transits, largest energy drift {np.nanmax(energy_drift):.3e}")

    return kinds, w_out, energy_drift, steps


def brute_force_transit(
    e: ElectronState,
    packet: PhononPacket,
    dt: float = DEFAULT_TIME_STEP,
    geometry: Geometry = Geometry.HEAD_ON,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> TransitOutcome:
    """Classifies a collision by integrating the transit through the sampled envelope.

    The transit is integrated in the packet frame and shifted back to the lab
    frame by the packet velocity. This serves as an independent check of
    collide_1d.

    Args:
        e: The electron, with e.v > 0
        packet: The phonon packet
        dt: Time step in reduced units
        geometry: Head-on or co-moving
        max_steps: Step budget

    Returns:
        A TransitOutcome"""

    w = _relative_velocity(e, packet, geometry)

    kinds, w_out, energy_drift, steps = brute_force_sweep(
        [w], packet, mass=e.mass, charge=e.charge, dt=dt, max_steps=max_steps
    )

    if kinds[0] is None:
        raise TrappedOrbitError(
            f"The transit at packet-frame speed {w} m/s did not leave the packet within "
            f"{max_steps} steps (barrier {barrier_energy(packet, e.charge):.4e} J, "
            f"kinetic energy {0.5 * e.mass * w**2:.4e} J)"
        )

    v_out = float(packet_velocity(packet, geometry) + w_out[0])

    return TransitOutcome(
        **_outcome(e, kinds[0], v_out),
        energy_drift=float(energy_drift[0]),
        steps=int(steps[0]),
    )
