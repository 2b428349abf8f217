"""
Monte Carlo relaxation of an electron population against a phonon bath.

Electrons live on a ladder of speed levels v_j = (2j + 1)·υ. A rebound on a
packet changes the speed by exactly 2υ, so head-on rebounds move an electron
one level up and co-moving rebounds one level down. A rebound lands in a
random spin slot of the target level and is Pauli blocked when that slot is
occupied, so the spin channels share the ladder. The bath is a reservoir at
fixed temperature: an energy gain is accepted with probability exp(-ΔE/k_B·T).
Pauli blocking on a discrete ladder is this package's realization of the
relaxation towards Fermi-Dirac occupancy.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import StrEnum, auto
from functools import partial
from typing import Optional, Self

import numpy as np
from pydantic import BaseModel, Field
from scipy.constants import k as k_B
from scipy.constants import m_e
from scipy.optimize import curve_fit
from scipy.special import entr, expit

from phonontide.toolbox.collision import (ElectronState, Geometry, OutcomeKind,
                                          collide_1d)
from phonontide.toolbox.exceptions import FitError, NoCollisionError
from phonontide.toolbox.lattice import BathSpec, PhononPacket
from phonontide.utils.parallel_utils import batch_map

logger = logging.getLogger(__name__)

DRAWS_PER_STEP = 4  # electron, geometry, bath acceptance, target spin slot
DEFAULT_SPIN_CHANNELS = 2
DEFAULT_WINDOWS = 10
GEOMETRIES = (Geometry.HEAD_ON, Geometry.CO_MOVING)


class EventReason(StrEnum):
    PASS_NO_EXCHANGE = auto()
    PAULI_BLOCKED = auto()
    REBOUND_EXCHANGED = auto()
    NO_COLLISION = auto()
    BATH_REJECTED = auto()
    LADDER_EDGE = auto()


REASONS = list(EventReason)


class CollisionEvent(BaseModel):
    """A single Monte Carlo event. level_out equals level_in unless accepted."""

    level_in: int
    level_out: int
    geometry: Geometry
    accepted: bool
    reason: EventReason


class LinkBalance(BaseModel):
    """Flux balance of the link between level and level + 1.

    The accepted moves in each direction are divided by the time-averaged
    occupancy factor of that direction, f_j(1 - f_j+1) up and f_j+1(1 - f_j)
    down. In equilibrium with the bath the ratio of the two equals
    exp(-Δε/k_B·T).

    Attributes:
        level: Lower level j of the link
        up_moves: Accepted moves j -> j + 1
        down_moves: Accepted moves j + 1 -> j
        occupancy_lower: Time-averaged occupancy f_j
        occupancy_upper: Time-averaged occupancy f_j+1
        expected: exp(-Δε/k_B·T) of the link"""

    level: int
    up_moves: int = Field(ge=0)
    down_moves: int = Field(ge=0)
    occupancy_lower: float = Field(ge=0, le=1)
    occupancy_upper: float = Field(ge=0, le=1)
    expected: float = Field(ge=0)

    @property
    def moves(self) -> int:
        return self.up_moves + self.down_moves

    @property
    def ratio(self) -> float:
        up_factor = self.occupancy_lower * (1 - self.occupancy_upper)
        down_factor = self.occupancy_upper * (1 - self.occupancy_lower)

        if self.up_moves == 0 or self.down_moves == 0 or up_factor == 0 or down_factor == 0:
            return float("nan")

        return (self.up_moves / up_factor) / (self.down_moves / down_factor)

    @property
    def balance_error(self) -> float:
        """Relative deviation of the ratio from exp(-Δε/k_B·T)"""
        return abs(self.ratio / self.expected - 1)


class FitReport(BaseModel):
    """Fermi-Dirac fit of the time-averaged occupancy"""

    mu: float
    t_fit: float
    residual: float
    occupancy_at_mu: float
    bath_temperature: float
    n_steps: int
    seed: int


def ladder_velocities(n_levels: int, upsilon: float) -> np.ndarray:
    return (2 * np.arange(n_levels) + 1) * upsilon


@dataclass
class EnsembleState:
    """Occupancy of the speed ladder.

    Attributes:
        velocities: Speed of each level [m/s]
        energies: Kinetic energy of each level [J]
        occupancy: Boolean array [level, spin]
        electrons: Integer array [electron, (level, spin)]
        upsilon: Packet speed the ladder was built for [m/s]
        mass: Electron mass [kg]
        rng_seed: Seed of the counter-based random stream
        step_count: Number of steps taken so far"""

    velocities: np.ndarray
    energies: np.ndarray
    occupancy: np.ndarray
    electrons: np.ndarray
    upsilon: float
    mass: float = m_e
    rng_seed: int = 0
    step_count: int = 0

    def __post_init__(self):
        if self.occupancy.shape[0] != len(self.velocities):
            raise ValueError("The occupancy must have one row per ladder level")

        if len(self.electrons) != int(self.occupancy.sum()):
            raise ValueError(
                f"{len(self.electrons)} electrons do not match the occupancy total "
                f"{int(self.occupancy.sum())}"
            )

    @classmethod
    def create(
        cls,
        n_levels: int,
        n_electrons: int,
        upsilon: float,
        mass: float = m_e,
        spin_channels: int = DEFAULT_SPIN_CHANNELS,
        seed: int = 0,
        occupied: Optional[list[tuple[int, int]]] = None,
    ) -> Self:
        """Creates an ensemble.

        Without an explicit list of occupied (level, spin) states the lowest
        states are filled, which is the ground state at T = 0.

        Args:
            n_levels: Number of speed levels
            n_electrons: Number of electrons (ignored when occupied is given)
            upsilon: Packet speed, half the level spacing [m/s]
            mass: Electron mass [kg]
            spin_channels: Number of spin channels per level
            seed: Seed of the random stream
            occupied: Optional list of occupied (level, spin) states"""

        if n_levels < 2:
            raise ValueError(f"The ladder needs at least two levels, got {n_levels}")

        if upsilon <= 0:
            raise ValueError(f"upsilon must be positive, got {upsilon}")

        if occupied is None:
            if n_electrons > n_levels * spin_channels:
                raise ValueError(
                    f"{n_electrons} electrons do not fit in {n_levels} levels with "
                    f"{spin_channels} spin channels"
                )
            occupied = [(i // spin_channels, i % spin_channels) for i in range(n_electrons)]

        for level, spin in occupied:
            if not (0 <= level < n_levels and 0 <= spin < spin_channels):
                raise ValueError(f"The state ({level}, {spin}) lies outside the ladder")

        if len(set(occupied)) != len(occupied):
            raise ValueError("A (level, spin) state can hold only one electron")

        occupancy = np.zeros((n_levels, spin_channels), dtype=bool)
        for level, spin in occupied:
            occupancy[level, spin] = True

        velocities = ladder_velocities(n_levels, upsilon)

        return cls(
            velocities=velocities,
            energies=0.5 * mass * velocities**2,
            occupancy=occupancy,
            electrons=np.array(occupied, dtype=np.int64).reshape(-1, 2),
            upsilon=upsilon,
            mass=mass,
            rng_seed=seed,
        )

    @property
    def n_levels(self) -> int:
        return len(self.velocities)

    @property
    def spin_channels(self) -> int:
        return self.occupancy.shape[1]

    @property
    def n_electrons(self) -> int:
        return len(self.electrons)

    @property
    def total_energy(self) -> float:
        return float(self.energies[self.electrons[:, 0]].sum())

    def nearest_level(self, speed: float) -> int:
        return int(np.rint((abs(speed) / self.upsilon - 1) / 2))

    def copy(self) -> Self:
        return replace(self, occupancy=self.occupancy.copy(), electrons=self.electrons.copy())


@dataclass
class EventLog:
    """Compact record of all events of a run, one entry per step"""

    level_in: np.ndarray
    level_out: np.ndarray
    geometry: np.ndarray
    reason: np.ndarray

    @property
    def accepted(self) -> np.ndarray:
        return self.reason == REASONS.index(EventReason.REBOUND_EXCHANGED)

    def __len__(self) -> int:
        return len(self.reason)

    def event(self, index: int) -> CollisionEvent:
        reason = REASONS[self.reason[index]]
        return CollisionEvent(
            level_in=int(self.level_in[index]),
            level_out=int(self.level_out[index]),
            geometry=GEOMETRIES[self.geometry[index]],
            accepted=reason == EventReason.REBOUND_EXCHANGED,
            reason=reason,
        )

    def equals(self, other: "EventLog") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("level_in", "level_out", "geometry", "reason")
        )


@dataclass
class RelaxationResult:
    """Result of a relaxation run.

    Attributes:
        energies: Level energies [J]
        occupancy: Time-averaged occupancy per level over the final half of the run
        fit: Fermi-Dirac fit of the occupancy
        links: Flux balance per link over the final half of the run
        entropy_trace: Entropy of the windowed time-averaged occupancy
        window_edges: Step boundaries of the entropy windows
        events: The event log
        final_state: State after the last step"""

    energies: np.ndarray
    occupancy: np.ndarray
    fit: FitReport
    links: list[LinkBalance]
    entropy_trace: np.ndarray
    window_edges: np.ndarray
    events: EventLog
    final_state: EnsembleState = field(repr=False)

    @property
    def entropy_trend(self) -> float:
        return entropy_trend(self.entropy_trace)

    def busiest_link(self) -> LinkBalance:
        """The link with the most moves in its less frequent direction"""
        candidates = [link for link in self.links if np.isfinite(link.ratio)]

        if not candidates:
            raise ValueError("No link was crossed in both directions")

        return max(candidates, key=lambda link: min(link.up_moves, link.down_moves))


def fermi_energy(energies: np.ndarray, n_electrons: int, spin_channels: int) -> float:
    """Fermi energy of the ground state.

    Halfway between the highest occupied and the lowest empty level. If the
    highest occupied level is only partly filled its energy is returned."""

    n_filled = -(-n_electrons // spin_channels)

    if n_filled < 1 or n_filled >= len(energies):
        raise ValueError(f"{n_electrons} electrons do not define a Fermi level on this ladder")

    if n_electrons % spin_channels:
        return float(energies[n_filled - 1])

    return float(0.5 * (energies[n_filled - 1] + energies[n_filled]))


def step_draws(seed: int, start: int, n_steps: int) -> np.ndarray:
    """Random numbers for the steps start .. start + n_steps - 1.

    Row k holds the draws of step start + k. Each step consumes one Philox
    block, so the draws of a step only depend on the seed and the step number."""

    key = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    generator = np.random.Generator(np.random.Philox(key=key, counter=start))
    return generator.random((n_steps, DRAWS_PER_STEP))


def _acceptance(delta_e: float, temperature: float) -> float:
    if delta_e <= 0:
        return 1.0

    if temperature == 0:
        return 0.0

    return float(np.exp(-delta_e / (k_B * temperature)))


def _attempt(
    state: EnsembleState, packet: PhononPacket, level: int, geometry: Geometry
) -> tuple[EventReason, int, float]:
    """Collision outcome of an electron at the given level before Pauli and bath checks"""

    electron = ElectronState(v=float(state.velocities[level]), mass=state.mass)

    try:
        outcome = collide_1d(electron, packet, geometry)
    except NoCollisionError:
        return EventReason.NO_COLLISION, level, 0.0

    if outcome.kind == OutcomeKind.PASSED:
        return EventReason.PASS_NO_EXCHANGE, level, 0.0

    target = state.nearest_level(outcome.v_out)

    if target >= state.n_levels:
        return EventReason.LADDER_EDGE, level, 0.0

    if target == level:
        return EventReason.PASS_NO_EXCHANGE, level, 0.0

    return EventReason.REBOUND_EXCHANGED, target, outcome.delta_e_electron


def _spin_slot(draw: float, spin_channels: int) -> int:
    return min(int(draw * spin_channels), spin_channels - 1)


def _check_packet(state: EnsembleState, packet: PhononPacket) -> None:
    if state.n_electrons == 0:
        raise ValueError("The ensemble holds no electrons")

    if not np.isclose(packet.upsilon, state.upsilon, rtol=1e-12):
        raise ValueError(
            f"The packet speed {packet.upsilon} m/s does not match the ladder speed "
            f"{state.upsilon} m/s"
        )


def step(
    state: EnsembleState, bath: BathSpec, packet: PhononPacket
) -> tuple[EnsembleState, CollisionEvent]:
    """Performs a single Monte Carlo step.

    A random electron meets the packet head-on or co-moving with equal
    probability. A rebound moves it to a random spin slot of the level nearest
    to its outgoing speed, unless that slot is occupied or the bath rejects
    the energy gain.

    Args:
        state: The current state, left unchanged
        bath: The phonon bath
        packet: The phonon packet

    Returns:
        A tuple of the new state and the event"""

    _check_packet(state, packet)

    draws = step_draws(state.rng_seed, state.step_count, 1)[0]
    new_state = state.copy()
    new_state.step_count += 1

    index = min(int(draws[0] * state.n_electrons), state.n_electrons - 1)
    level, spin = (int(v) for v in state.electrons[index])
    geometry = GEOMETRIES[0 if draws[1] < 0.5 else 1]
    target_spin = _spin_slot(draws[3], state.spin_channels)

    reason, target, delta_e = _attempt(state, packet, level, geometry)

    if reason == EventReason.REBOUND_EXCHANGED:
        if state.occupancy[target, target_spin]:
            reason = EventReason.PAULI_BLOCKED
        elif draws[2] >= _acceptance(delta_e, bath.temperature):
            reason = EventReason.BATH_REJECTED

    accepted = reason == EventReason.REBOUND_EXCHANGED

    if accepted:
        new_state.occupancy[level, spin] = False
        new_state.occupancy[target, target_spin] = True
        new_state.electrons[index] = (target, target_spin)

    event = CollisionEvent(
        level_in=level,
        level_out=target if accepted else level,
        geometry=geometry,
        accepted=accepted,
        reason=reason,
    )

    return new_state, event


def _transition_table(
    state: EnsembleState, bath: BathSpec, packet: PhononPacket
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per level and geometry: reason code, target level and acceptance probability"""

    reasons = np.zeros((state.n_levels, 2), dtype=np.int8)
    targets = np.zeros((state.n_levels, 2), dtype=np.int64)
    acceptance = np.zeros((state.n_levels, 2))

    for level in range(state.n_levels):
        for g, geometry in enumerate(GEOMETRIES):
            reason, target, delta_e = _attempt(state, packet, level, geometry)
            reasons[level, g] = REASONS.index(reason)
            targets[level, g] = target
            acceptance[level, g] = _acceptance(delta_e, bath.temperature)

    return reasons, targets, acceptance


def entropy(occupancy: np.ndarray, spin_channels: int = 1) -> float:
    """Shannon entropy -Σ[f ln f + (1 - f) ln(1 - f)] of a per-level occupancy"""
    return float(spin_channels * np.sum(entr(occupancy) + entr(1 - occupancy)))


def fit_fermi_dirac(
    energies: np.ndarray, occupancy: np.ndarray, mu_init: float, temperature: float
) -> tuple[float, float, float]:
    """Least-squares fit of 1/(exp((ε - μ)/k_B·T) + 1) to the occupancy.

    The fit runs in units of the bath k_B·T, starting at mu_init and the bath
    temperature.

    Returns:
        A tuple (mu, t_fit, rms residual)"""

    if temperature <= 0:
        raise FitError("A Fermi-Dirac fit requires a positive bath temperature")

    scale = k_B * temperature
    x = energies / scale

    def model(x, mu, t):
        return expit(-(x - mu) / t)

    try:
        (mu, t), _ = curve_fit(
            model,
            x,
            occupancy,
            p0=(mu_init / scale, 1.0),
            bounds=([-np.inf, 1e-6], [np.inf, np.inf]),
            max_nfev=10_000,
        )
    except (RuntimeError, ValueError) as error:
        raise FitError(
            f"The Fermi-Dirac fit did not converge (mu_init = {mu_init:.4e} J, "
            f"T = {temperature} K): {error}"
        ) from error

    residual = float(np.sqrt(np.mean((model(x, mu, t) - occupancy) ** 2)))

    if not (np.isfinite(mu) and np.isfinite(t)):
        raise FitError(f"The Fermi-Dirac fit returned non-finite parameters ({mu}, {t})")

    return float(mu * scale), float(t * temperature), residual


def link_balances(
    energies: np.ndarray,
    occupancy: np.ndarray,
    events: EventLog,
    temperature: float,
    start: int = 0,
) -> list[LinkBalance]:
    """Flux balance of every link between adjacent levels.

    Args:
        energies: Level energies [J]
        occupancy: Time-averaged occupancy per level over the steps start .. end
        events: The event log
        temperature: Bath temperature [K]
        start: First step whose moves are counted

    Returns:
        A LinkBalance per link, ordered by level"""

    n_levels = len(energies)
    level_in = events.level_in[start:]
    level_out = events.level_out[start:]
    exchanged = events.accepted[start:]
    up = level_out > level_in

    up_moves = np.bincount(level_in[exchanged & up], minlength=n_levels)
    down_moves = np.bincount(level_out[exchanged & ~up], minlength=n_levels)

    return [
        LinkBalance(
            level=level,
            up_moves=int(up_moves[level]),
            down_moves=int(down_moves[level]),
            occupancy_lower=float(np.clip(occupancy[level], 0, 1)),
            occupancy_upper=float(np.clip(occupancy[level + 1], 0, 1)),
            expected=_acceptance(energies[level + 1] - energies[level], temperature),
        )
        for level in range(n_levels - 1)
    ]


def window_edges(n_steps: int, n_windows: int) -> np.ndarray:
    """Step boundaries of n_windows windows whose length doubles from one to the next.

    The last window is the final half of the run, so the early windows resolve
    the approach to equilibrium."""

    if n_steps < 2 * n_windows:
        raise ValueError(f"n_steps must be at least {2 * n_windows}, got {n_steps}")

    edges = np.rint(n_steps * 2.0 ** np.arange(-n_windows + 1, 1)).astype(np.int64)
    edges = np.concatenate([[0], edges])

    for index in range(1, n_windows + 1):
        edges[index] = max(edges[index], edges[index - 1] + 1)

    return edges


def entropy_trend(trace: np.ndarray) -> float:
    """Relative entropy gain 1 - early/late between the earlier and the later half of the windows.

    Non-negative when the entropy did not decrease; small negative values are
    window noise."""

    half = len(trace) // 2
    if half == 0:
        raise ValueError("An entropy trend needs at least two windows")

    early = float(np.mean(trace[:half]))
    late = float(np.mean(trace[half:]))

    if late == 0:
        return 0.0 if early == 0 else float("-inf")

    return 1 - early / late


@dataclass
class SimulationRecord:
    """Raw output of a Monte Carlo run.

    Attributes:
        occupancy: Time-averaged occupancy per level over the final half of the run
        window_occupancy: Time-averaged occupancy per level for each window
        window_edges: Step boundaries of the windows
        events: The event log
        final_state: State after the last step"""

    occupancy: np.ndarray
    window_occupancy: np.ndarray
    window_edges: np.ndarray
    events: EventLog
    final_state: EnsembleState = field(repr=False)

    @property
    def entropy_trace(self) -> np.ndarray:
        spin_channels = self.final_state.spin_channels
        return np.array([entropy(f, spin_channels) for f in self.window_occupancy])


def simulate(
    state: EnsembleState,
    bath: BathSpec,
    packet: PhononPacket,
    n_steps: int,
    seed: Optional[int] = None,
    n_windows: int = DEFAULT_WINDOWS,
) -> SimulationRecord:
    """Runs n_steps Monte Carlo steps.

    The steps use the same random stream as repeated calls of step, so a run
    is bit-identical to stepping one at a time. Collision outcomes are
    tabulated per level and geometry beforehand.

    Args:
        state: The initial state, left unchanged
        bath: The phonon bath
        packet: The phonon packet
        n_steps: Number of steps
        seed: Seed of the random stream, default is the seed of the state
        n_windows: Number of windows of the entropy trace

    Returns:
        A SimulationRecord"""

    _check_packet(state, packet)

    edges = window_edges(n_steps, n_windows)

    work = state.copy()
    if seed is not None:
        work.rng_seed = seed

    reasons, targets, acceptance = _transition_table(work, bath, packet)
    draws = step_draws(work.rng_seed, work.step_count, n_steps)
    target_spins = np.minimum((draws[:, 3] * work.spin_channels).astype(np.int64), work.spin_channels - 1)

    exchanged_code = REASONS.index(EventReason.REBOUND_EXCHANGED)
    blocked_code = REASONS.index(EventReason.PAULI_BLOCKED)
    rejected_code = REASONS.index(EventReason.BATH_REJECTED)

    log = EventLog(
        level_in=np.zeros(n_steps, dtype=np.int64),
        level_out=np.zeros(n_steps, dtype=np.int64),
        geometry=np.zeros(n_steps, dtype=np.int8),
        reason=np.zeros(n_steps, dtype=np.int8),
    )

    occupancy = work.occupancy
    electrons = work.electrons
    level_counts = occupancy.sum(axis=1).astype(np.int64)

    n_electrons = work.n_electrons
    averaging_start = n_steps // 2
    step_window = np.repeat(np.arange(n_windows), np.diff(edges))
    average = np.zeros(work.n_levels)
    window_sums = np.zeros((n_windows, work.n_levels))

    for i in range(n_steps):
        index = min(int(draws[i, 0] * n_electrons), n_electrons - 1)
        level = electrons[index, 0]
        spin = electrons[index, 1]
        g = 0 if draws[i, 1] < 0.5 else 1

        reason = reasons[level, g]
        target = level

        if reason == exchanged_code:
            target = targets[level, g]
            target_spin = target_spins[i]
            if occupancy[target, target_spin]:
                reason = blocked_code
                target = level
            elif draws[i, 2] >= acceptance[level, g]:
                reason = rejected_code
                target = level
            else:
                occupancy[level, spin] = False
                occupancy[target, target_spin] = True
                electrons[index, 0] = target
                electrons[index, 1] = target_spin
                level_counts[level] -= 1
                level_counts[target] += 1

        log.level_in[i] = level
        log.level_out[i] = target
        log.geometry[i] = g
        log.reason[i] = reason

        if i >= averaging_start:
            average += level_counts

        window_sums[step_window[i]] += level_counts

    work.step_count += n_steps

    spin_channels = work.spin_channels

    return SimulationRecord(
        occupancy=average / ((n_steps - averaging_start) * spin_channels),
        window_occupancy=window_sums / (np.diff(edges)[:, None] * spin_channels),
        window_edges=edges,
        events=log,
        final_state=work,
    )


def relax(
    state: EnsembleState,
    bath: BathSpec,
    packet: PhononPacket,
    n_steps: int,
    seed: Optional[int] = None,
    n_windows: int = DEFAULT_WINDOWS,
) -> RelaxationResult:
    """Runs n_steps Monte Carlo steps and fits Fermi-Dirac to the result.

    The fit starts at the median energy of the electrons and the bath
    temperature. A fit that does not converge raises a FitError.

    Args:
        state: The initial state, left unchanged
        bath: The phonon bath
        packet: The phonon packet
        n_steps: Number of steps (at least 1e5 for a reliable fit)
        seed: Seed of the random stream, default is the seed of the state
        n_windows: Number of windows of the entropy trace

    Returns:
        A RelaxationResult"""

    record = simulate(state, bath, packet, n_steps, seed=seed, n_windows=n_windows)
    work = record.final_state

    mu_init = float(np.median(work.energies[work.electrons[:, 0]]))
    mu, t_fit, residual = fit_fermi_dirac(
        work.energies, record.occupancy, mu_init, bath.temperature
    )
    occupancy_at_mu = float(np.interp(mu, work.energies, record.occupancy))

    logger.info(
        f"Relaxed {work.n_electrons} electrons over {n_steps} steps: mu = {mu:.4e} J, "
        f"T_fit = {t_fit:.2f} K (bath {bath.temperature} K), residual {residual:.3e}"
    )

    fit = FitReport(
        mu=mu,
        t_fit=t_fit,
        residual=residual,
        occupancy_at_mu=occupancy_at_mu,
        bath_temperature=bath.temperature,
        n_steps=n_steps,
        seed=work.rng_seed,
    )

    return RelaxationResult(
        energies=work.energies.copy(),
        occupancy=record.occupancy,
        fit=fit,
        links=link_balances(
            work.energies, record.occupancy, record.events, bath.temperature, start=n_steps // 2
        ),
        entropy_trace=record.entropy_trace,
        window_edges=record.window_edges,
        events=record.events,
        final_state=work,
    )


def trial_seeds(seed: int, n_trials: int) -> list[int]:
    """Independent seeds for n_trials runs, spawned from a single seed"""
    children = np.random.SeedSequence(seed).spawn(n_trials)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def _relax_trial(
    seed: int, state: EnsembleState, bath: BathSpec, packet: PhononPacket, n_steps: int
) -> RelaxationResult:
    return relax(state, bath, packet, n_steps, seed=seed)


def run_trials(
    state: EnsembleState,
    bath: BathSpec,
    packet: PhononPacket,
    n_steps: int,
    n_trials: int,
    seed: int,
    max_workers: Optional[int] = None,
) -> list[RelaxationResult]:
    """Runs independent relaxations in parallel, ordered by trial index"""
    func = partial(_relax_trial, state=state, bath=bath, packet=packet, n_steps=n_steps)
    return batch_map(func, trial_seeds(seed, n_trials), max_workers=max_workers)
