"""
Quantum wavepackets of free electrons in uniform and piecewise linear fields.

A packet φ(x) = Σ_j c_j·exp(i·k_j·x) of plane waves on a periodic grid moves
with the group velocity ħk₀/m. A uniform field E is handled in the gauge where
every component keeps its label k and accumulates the phase of the shifted
energy ħ²(k - qEt/ħ)²/2m; multiplying by exp(-iqEtx/ħ) returns to the
position picture. General potentials use a Strang split-step propagator. In
a cell of a piecewise linear potential the packet accelerates with qV′/m.

The packet width is a free parameter. A natural choice would tie Δk to √k₀;
the propagators do not depend on it.
"""

import logging
from dataclasses import dataclass, field
from enum import StrEnum, auto
from functools import partial
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field, model_validator
from scipy.constants import e as elementary_charge
from scipy.constants import hbar, m_e
from scipy.integrate import solve_ivp

from phonontide.toolbox.exceptions import (BoundaryContactError,
                                           ConfinementError, NumericalError)
from phonontide.utils.parallel_utils import batch_map

logger = logging.getLogger(__name__)

DEFAULT_K0 = 1e10  # 1/m
DEFAULT_RATIO = 0.05
DEFAULT_WIDTHS = 80.0  # grid length in initial packet widths
DEFAULT_GRID_POINTS = 4096
DEFAULT_SAMPLES = 101
DEFAULT_TRAVEL_WIDTHS = 10.0
DEFAULT_DIRECT_STEPS = 2000
DEFAULT_MOMENTUM_SHIFT = 0.5  # field runs change the momentum by this fraction of ħk₀
CONVERGENCE_RATIOS = (0.1, 0.05, 0.025)
RESOLUTION_FACTOR = 4
RECOMMENDED_MAX_RATIO = 0.1
EDGE_FRACTION = 0.1
LEAKAGE_LIMIT = 1e-6
CONFINEMENT_FRACTION = 0.25
CELL_MARGIN = 3.0  # packet widths between the centroid and a cell boundary for fitting
MIN_FIT_SAMPLES = 5
STEPS_PER_PERIOD = 200
CONTINUITY_TOLERANCE = 1e-9


class SpectralProfile(StrEnum):
    GAUSSIAN = auto()
    FLAT = auto()


class FieldKind(StrEnum):
    NONE = auto()
    UNIFORM = auto()
    PIECEWISE_LINEAR = auto()


class Breakpoint(BaseModel):
    """Start of a linear cell.

    Attributes:
        x (float): Position of the breakpoint [m]
        potential (float): V(x) at the breakpoint [V]
        slope (float): V′ on the cell starting at the breakpoint [V/m]"""

    x: float
    potential: float
    slope: float


class FieldSpec(BaseModel):
    """The electrostatic potential a wavepacket moves in.

    A uniform field E has V(x) = -E·x. A piecewise linear potential consists of
    cells starting at each breakpoint; the first cell extends to -inf and the
    last one to +inf. The potential energy of the charge q is -q·V(x).

    Attributes:
        kind (FieldKind): none, uniform or piecewise_linear
        field_strength (float): E for a uniform field [V/m]
        breakpoints (list[Breakpoint]): Cell starts for a piecewise linear potential"""

    kind: FieldKind = FieldKind.NONE
    field_strength: float = 0.0
    breakpoints: list[Breakpoint] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind != FieldKind.PIECEWISE_LINEAR and self.breakpoints:
            raise ValueError(f"Breakpoints are only allowed for a piecewise linear field, not {self.kind}")

        if self.kind == FieldKind.NONE and self.field_strength != 0:
            raise ValueError("A field of kind 'none' cannot have a field strength")

        if self.kind == FieldKind.PIECEWISE_LINEAR:
            if not self.breakpoints:
                raise ValueError("A piecewise linear field needs at least one breakpoint")

            if self.field_strength != 0:
                raise ValueError("A piecewise linear field is defined by its breakpoints only")

        return self

    @model_validator(mode="after")
    def check_continuity(self):
        for left, right in zip(self.breakpoints[:-1], self.breakpoints[1:]):
            if right.x <= left.x:
                raise ValueError(
                    f"Breakpoints must be strictly increasing, got x = {left.x} followed by {right.x}"
                )

            value = left.potential + left.slope * (right.x - left.x)
            scale = max(1.0, abs(right.potential), abs(left.slope * (right.x - left.x)))
            if abs(value - right.potential) > CONTINUITY_TOLERANCE * scale:
                raise ValueError(
                    f"The potential is discontinuous at x = {right.x}: the cell from x = {left.x} "
                    f"ends at {value} V, the next cell starts at {right.potential} V"
                )

        return self

    @classmethod
    def uniform(cls, field_strength: float) -> "FieldSpec":
        return cls(kind=FieldKind.UNIFORM, field_strength=field_strength)

    @property
    def n_cells(self) -> int:
        return max(1, len(self.breakpoints))

    def _arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.array([b.x for b in self.breakpoints]),
            np.array([b.potential for b in self.breakpoints]),
            np.array([b.slope for b in self.breakpoints]),
        )

    def cell_index(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind != FieldKind.PIECEWISE_LINEAR:
            return np.zeros(x.shape, dtype=int)

        starts, _, _ = self._arrays()
        return np.clip(np.searchsorted(starts, x, side="right") - 1, 0, len(starts) - 1)

    def cell_bounds(self, index: int) -> tuple[float, float]:
        """The [low, high) interval of the cell; the outer cells are unbounded"""
        if not 0 <= index < self.n_cells:
            raise IndexError(f"There is no cell {index}, the field has {self.n_cells} cells")

        if self.kind != FieldKind.PIECEWISE_LINEAR:
            return -np.inf, np.inf

        low = -np.inf if index == 0 else self.breakpoints[index].x
        high = np.inf if index == self.n_cells - 1 else self.breakpoints[index + 1].x
        return low, high

    def potential(self, x: ArrayLike) -> np.ndarray:
        """V(x) [V]"""
        x = np.asarray(x, dtype=float)

        if self.kind == FieldKind.NONE:
            return np.zeros(x.shape)

        if self.kind == FieldKind.UNIFORM:
            return -self.field_strength * x

        starts, values, slopes = self._arrays()
        index = self.cell_index(x)
        return values[index] + slopes[index] * (x - starts[index])

    def slope(self, x: ArrayLike) -> np.ndarray:
        """V′(x) [V/m]"""
        x = np.asarray(x, dtype=float)

        if self.kind == FieldKind.NONE:
            return np.zeros(x.shape)

        if self.kind == FieldKind.UNIFORM:
            return np.full(x.shape, -self.field_strength)

        _, _, slopes = self._arrays()
        return slopes[self.cell_index(x)]

    def potential_energy(self, x: ArrayLike, charge: float) -> np.ndarray:
        """-q·V(x) [J]"""
        return -charge * self.potential(x)


def check_resolution(spec: "WavepacketSpec") -> None:
    """Raises a ValueError unless M/L > 4·(k₀ + Δk)/2π"""
    required = RESOLUTION_FACTOR * (spec.k0 + spec.delta_k) / (2 * np.pi)
    density = spec.grid_points / spec.length

    if density <= required:
        raise ValueError(
            f"The grid is under-resolved: {spec.grid_points} points over {spec.length:.4e} m give "
            f"{density:.4e} points/m, more than {required:.4e} points/m are needed"
        )


class WavepacketSpec(BaseModel):
    """A plane-wave packet on a periodic grid x = -L/2 + m·L/M.

    Attributes:
        k0 (float): Center wavenumber [1/m]
        delta_k (float): Spectral width [1/m]
        n_modes (Optional[int]): Number of grid modes nearest to k0, default is the whole profile
        length (float): Grid length L [m]
        grid_points (int): Number of grid points M
        mass (float): Particle mass [kg]
        charge (float): Particle charge q [C]
        profile (SpectralProfile): gaussian exp(-(k-k0)²/4Δk²) or flat on k0 ± Δk"""

    k0: float = Field(gt=0)
    delta_k: float = Field(gt=0)
    n_modes: Optional[int] = Field(default=None, ge=1)
    length: float = Field(gt=0)
    grid_points: int = Field(default=DEFAULT_GRID_POINTS, ge=16)
    mass: float = Field(default=m_e, gt=0)
    charge: float = elementary_charge
    profile: SpectralProfile = SpectralProfile.GAUSSIAN

    @model_validator(mode="after")
    def check_grid(self):
        if self.delta_k >= self.k0:
            raise ValueError(f"delta_k ({self.delta_k}) must be smaller than k0 ({self.k0})")

        check_resolution(self)
        return self

    @classmethod
    def from_ratio(
        cls,
        ratio: float = DEFAULT_RATIO,
        k0: float = DEFAULT_K0,
        widths: float = DEFAULT_WIDTHS,
        grid_points: int = DEFAULT_GRID_POINTS,
        **kwargs,
    ) -> "WavepacketSpec":
        """A packet with Δk = ratio·k₀ on a grid of the given number of packet widths"""
        delta_k = ratio * k0
        return cls(
            k0=k0, delta_k=delta_k, length=widths / (2 * delta_k), grid_points=grid_points, **kwargs
        )

    @property
    def ratio(self) -> float:
        return self.delta_k / self.k0

    @property
    def dx(self) -> float:
        return self.length / self.grid_points

    @property
    def x(self) -> np.ndarray:
        return -self.length / 2 + self.dx * np.arange(self.grid_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.grid_points, d=self.dx)

    @property
    def sigma_x(self) -> float:
        """rms width 1/(2Δk) of the initial gaussian density [m]"""
        return 1 / (2 * self.delta_k)

    @property
    def group_velocity(self) -> float:
        return hbar * self.k0 / self.mass


@dataclass
class Wavepacket:
    """Complex amplitude samples psi on the grid of spec, normalized to unit probability"""

    spec: WavepacketSpec
    psi: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.spec.x

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.density) * self.spec.dx)

    @property
    def centroid(self) -> float:
        return _measure(self.spec, self.psi)[1]

    @property
    def width(self) -> float:
        return _measure(self.spec, self.psi)[3]


class CellLog(BaseModel):
    """A contiguous stay of the packet centroid in one cell.

    Attributes:
        cell (int): Cell index
        x_low (Optional[float]): Lower cell bound [m], None if unbounded
        x_high (Optional[float]): Upper cell bound [m], None if unbounded
        slope (float): V′ in the cell [V/m]
        expected_acceleration (float): q·V′/m [m/s²]
        fitted_acceleration (Optional[float]): Quadratic fit of the centroid away from the cell bounds
        relative_error (Optional[float]): |fitted/expected - 1|
        t_enter (float): First sample time in the cell [s]
        t_exit (float): Last sample time in the cell [s]
        samples (int): Number of samples in the cell
        fit_samples (int): Number of samples used for the fit
        max_width_ratio (float): Largest packet width over cell width
        confined (bool): Whether the width stayed below a quarter of the cell"""

    cell: int
    x_low: Optional[float]
    x_high: Optional[float]
    slope: float
    expected_acceleration: float
    fitted_acceleration: Optional[float] = None
    relative_error: Optional[float] = None
    t_enter: float
    t_exit: float
    samples: int
    fit_samples: int
    max_width_ratio: float
    confined: bool


def _fit(times: np.ndarray, values: np.ndarray, degree: int) -> tuple[np.ndarray, float]:
    scale = times[-1] - times[0]
    if len(times) <= degree or scale <= 0:
        raise ValueError(f"A degree {degree} fit needs more than {degree} distinct sample times")

    return np.polynomial.polynomial.polyfit((times - times[0]) / scale, values, degree), scale


def fit_velocity(times: np.ndarray, centroid: np.ndarray) -> float:
    coefficients, scale = _fit(times, centroid, 1)
    return float(coefficients[1] / scale)


def fit_acceleration(times: np.ndarray, centroid: np.ndarray) -> float:
    coefficients, scale = _fit(times, centroid, 2)
    return float(2 * coefficients[2] / scale**2)


@dataclass
class PropagationResult:
    """The evolved packet with its sampled trajectory.

    velocity is the momentum expectation ⟨p⟩/m, width the rms width of |ψ|².
    n_steps is 0 for the exact spectral propagators."""

    initial: Wavepacket
    psi: np.ndarray
    times: np.ndarray
    centroid: np.ndarray
    velocity: np.ndarray
    width: np.ndarray
    norm: np.ndarray
    field_spec: FieldSpec
    n_steps: int = 0
    cell_log: list[CellLog] = field(default_factory=list)

    @property
    def spec(self) -> WavepacketSpec:
        return self.initial.spec

    @property
    def x(self) -> np.ndarray:
        return self.spec.x

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def final_packet(self) -> Wavepacket:
        return Wavepacket(spec=self.spec, psi=self.psi)

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - self.initial.norm)))

    def fitted_velocity(self) -> float:
        return fit_velocity(self.times, self.centroid)

    def fitted_acceleration(self) -> float:
        return fit_acceleration(self.times, self.centroid)


def _to_coefficients(spec: WavepacketSpec, psi: np.ndarray) -> np.ndarray:
    """The c_j of psi(x) = Σ c_j·exp(i·k_j·x) on the grid"""
    return np.fft.fft(psi) * np.exp(-1j * spec.wavenumbers * spec.x[0]) / spec.grid_points


def _from_coefficients(spec: WavepacketSpec, coefficients: np.ndarray) -> np.ndarray:
    return np.fft.ifft(coefficients * np.exp(1j * spec.wavenumbers * spec.x[0])) * spec.grid_points


def _edge_mask(spec: WavepacketSpec) -> np.ndarray:
    offset = spec.x - spec.x[0]
    return (offset < EDGE_FRACTION * spec.length) | (offset >= (1 - EDGE_FRACTION) * spec.length)


def _measure(spec: WavepacketSpec, psi: np.ndarray) -> tuple[float, float, float, float, float]:
    """norm, centroid, velocity ⟨p⟩/m, rms width and the probability in the edge region"""
    x = spec.x
    density = np.abs(psi) ** 2
    norm = float(np.sum(density) * spec.dx)

    centroid = float(np.sum(x * density) * spec.dx / norm)
    width = float(np.sqrt(np.sum((x - centroid) ** 2 * density) * spec.dx / norm))

    power = np.abs(np.fft.fft(psi)) ** 2
    velocity = float(hbar * np.sum(spec.wavenumbers * power) / np.sum(power) / spec.mass)

    leakage = float(np.sum(density[_edge_mask(spec)]) * spec.dx)
    return norm, centroid, velocity, width, leakage


class _TrajectoryRecorder:
    def __init__(self, spec: WavepacketSpec, monitor: Optional[Callable[[float, float, float], None]]):
        self.spec = spec
        self.monitor = monitor
        self.rows: list[tuple[float, float, float, float, float]] = []

    def record(self, time: float, psi: np.ndarray) -> None:
        norm, centroid, velocity, width, leakage = _measure(self.spec, psi)

        if leakage > LEAKAGE_LIMIT:
            raise BoundaryContactError(
                f"At t = {time:.4e} s a probability of {leakage:.3e} lies in the outer "
                f"{EDGE_FRACTION:.0%} of the grid (centroid {centroid:.4e} m, width {width:.4e} m); "
                "enlarge the grid or shorten the run"
            )

        if self.monitor is not None:
            self.monitor(time, centroid, width)

        self.rows.append((time, centroid, velocity, width, norm))

    def result(
        self, initial: Wavepacket, psi: np.ndarray, field_spec: FieldSpec, n_steps: int
    ) -> PropagationResult:
        times, centroid, velocity, width, norm = (np.array(column) for column in zip(*self.rows))

        return PropagationResult(
            initial=initial,
            psi=psi,
            times=times,
            centroid=centroid,
            velocity=velocity,
            width=width,
            norm=norm,
            field_spec=field_spec,
            n_steps=n_steps,
        )


def spectral_weights(spec: WavepacketSpec) -> np.ndarray:
    """Mode weights c_j of the packet, indexed like spec.wavenumbers"""
    k = spec.wavenumbers
    offset = np.abs(k - spec.k0)

    if spec.profile == SpectralProfile.GAUSSIAN:
        weights = np.exp(-((k - spec.k0) ** 2) / (4 * spec.delta_k**2))
    else:
        weights = (offset <= spec.delta_k).astype(float)

    if spec.n_modes is not None:
        selected = np.zeros(k.size, dtype=bool)
        selected[np.argsort(offset, kind="stable")[: spec.n_modes]] = True

        if spec.profile == SpectralProfile.FLAT:
            weights = selected.astype(float)
        else:
            weights = np.where(selected, weights, 0.0)

    if not np.any(weights > 0):
        raise ValueError(
            f"No grid mode lies within k0 ± delta_k; the mode spacing is {2 * np.pi / spec.length:.4e} 1/m"
        )

    return weights


def build_packet(spec: WavepacketSpec) -> Wavepacket:
    """Builds the normalized packet Σ_j c_j·exp(i·k_j·x), centered at the origin.

    Args:
        spec: The packet and grid

    Returns:
        A Wavepacket with unit total probability on the grid"""

    check_resolution(spec)

    if spec.ratio > RECOMMENDED_MAX_RATIO:
        logger.warning(
            f"delta_k/k0 = {spec.ratio:.3f} exceeds {RECOMMENDED_MAX_RATIO}; the packet spreads "
            "quickly compared to its travel"
        )

    psi = _from_coefficients(spec, spectral_weights(spec).astype(complex))
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * spec.dx)

    return Wavepacket(spec=spec, psi=psi)


def fwhm(packet: Wavepacket) -> float:
    """Full width at half maximum of |ψ|² around its peak, inf for a flat density"""
    density = packet.density
    x = packet.x
    peak = int(np.argmax(density))
    half = density[peak] / 2

    below = np.flatnonzero(density < half)
    if below.size == 0:
        return np.inf

    left_side = below[below < peak]
    right_side = below[below > peak]
    if left_side.size == 0 or right_side.size == 0:
        raise ValueError("The half maximum is not reached on both sides of the peak")

    left = left_side[-1]
    right = right_side[0]
    x_left = np.interp(half, density[left : left + 2], x[left : left + 2])
    x_right = np.interp(half, density[right - 1 : right + 1][::-1], x[right - 1 : right + 1][::-1])

    return float(x_right - x_left)


def _check_duration(duration: float) -> None:
    if not duration > 0:
        raise ValueError(f"The duration must be positive, got {duration}")


def _gauge_phase(spec: WavepacketSpec, time: float, field_strength: float) -> np.ndarray:
    """∫₀ᵗ ε_s(k)/ħ ds with ε_s(k) = ħ²(k - qEs/ħ)²/2m"""
    k = spec.wavenumbers
    rate = spec.charge * field_strength / hbar
    return hbar / (2 * spec.mass) * (k**2 * time - k * rate * time**2 + rate**2 * time**3 / 3)


def _evolve_gauge(
    packet: Wavepacket, field_strength: float, duration: float, n_samples: int, field_spec: FieldSpec
) -> PropagationResult:
    _check_duration(duration)
    if n_samples < 2:
        raise ValueError(f"At least 2 samples are needed, got {n_samples}")

    spec = packet.spec
    coefficients = _to_coefficients(spec, packet.psi)
    recorder = _TrajectoryRecorder(spec, monitor=None)

    psi = packet.psi
    for time in np.linspace(0.0, duration, n_samples):
        chi = _from_coefficients(spec, coefficients * np.exp(-1j * _gauge_phase(spec, time, field_strength)))
        psi = np.exp(-1j * spec.charge * field_strength * time / hbar * spec.x) * chi
        recorder.record(float(time), psi)

    return recorder.result(packet, psi, field_spec, n_steps=0)


def propagate_free(
    packet: Wavepacket, duration: float, n_samples: int = DEFAULT_SAMPLES
) -> PropagationResult:
    """Exact evolution with ω(k) = ħk²/2m.

    Args:
        packet: The initial packet
        duration: Propagation time [s]
        n_samples: Number of trajectory samples, including t = 0

    Returns:
        The evolved packet and its centroid trajectory

    Raises:
        BoundaryContactError: when the packet reaches the edge region of the grid"""

    return _evolve_gauge(packet, 0.0, duration, n_samples, FieldSpec())


def propagate_uniform_field(
    packet: Wavepacket, field_strength: float, duration: float, n_samples: int = DEFAULT_SAMPLES
) -> PropagationResult:
    """Exact evolution in the uniform field E, potential energy qEx.

    Each component k evolves with the energy ħ²(k - qEt/ħ)²/2m of the gauge
    picture and the result is multiplied by exp(-iqEtx/ħ). The centroid
    accelerates with -qE/m. E = 0 is identical to propagate_free.

    Args:
        packet: The initial packet
        field_strength: E [V/m]
        duration: Propagation time [s]
        n_samples: Number of trajectory samples, including t = 0"""

    return _evolve_gauge(packet, field_strength, duration, n_samples, FieldSpec.uniform(field_strength))


def propagate_split_operator(
    packet: Wavepacket,
    potential_energy: ArrayLike,
    duration: float,
    n_steps: int,
    n_samples: int = DEFAULT_SAMPLES,
    field_spec: Optional[FieldSpec] = None,
    monitor: Optional[Callable[[float, float, float], None]] = None,
) -> PropagationResult:
    """Strang split-step evolution exp(-iUdt/2ħ)·exp(-iTdt/ħ)·exp(-iUdt/2ħ).

    Args:
        packet: The initial packet
        potential_energy: U on the grid [J]
        duration: Propagation time [s]
        n_steps: Number of time steps
        n_samples: Number of trajectory samples, spread evenly over the steps
        field_spec: The field U derives from, stored on the result
        monitor: Called with (time, centroid, width) at every sample

    Returns:
        The evolved packet and its trajectory"""

    _check_duration(duration)
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")

    spec = packet.spec
    potential_energy = np.asarray(potential_energy, dtype=float)
    if potential_energy.shape != (spec.grid_points,):
        raise ValueError(
            f"The potential energy must have {spec.grid_points} grid values, got {potential_energy.shape}"
        )

    dt = duration / n_steps
    half_potential = np.exp(-0.5j * potential_energy * dt / hbar)
    kinetic = np.exp(-1j * hbar * spec.wavenumbers**2 * dt / (2 * spec.mass))
    sample_steps = set(np.linspace(0, n_steps, max(2, min(n_samples, n_steps + 1))).round().astype(int).tolist())

    recorder = _TrajectoryRecorder(spec, monitor)
    psi = packet.psi.copy()
    recorder.record(0.0, psi)

    for index in range(1, n_steps + 1):
        psi = half_potential * np.fft.ifft(kinetic * np.fft.fft(half_potential * psi))

        if index in sample_steps:
            recorder.record(index * dt, psi)

    logger.debug(f"Split-step propagation over {n_steps} steps of {dt:.3e} s")
    return recorder.result(packet, psi, field_spec or FieldSpec(), n_steps=n_steps)


def l2_distance_modulo_phase(spec: WavepacketSpec, reference: np.ndarray, other: np.ndarray) -> float:
    """L² distance after rotating other onto the global phase of reference"""
    overlap = np.vdot(reference, other)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.sqrt(np.sum(np.abs(reference - other * np.conj(phase)) ** 2) * spec.dx))


def gauge_vs_direct_discrepancy(
    packet: Wavepacket, field_strength: float, duration: float, n_steps: int = DEFAULT_DIRECT_STEPS
) -> float:
    """L² distance between the gauge evolution and split-step evolution with U = qEx.

    Strang splitting is exact for a linear potential up to a global phase, which
    is removed before comparing."""

    spec = packet.spec
    gauge = propagate_uniform_field(packet, field_strength, duration, n_samples=2)
    direct = propagate_split_operator(
        packet,
        spec.charge * field_strength * spec.x,
        duration,
        n_steps,
        n_samples=2,
        field_spec=FieldSpec.uniform(field_strength),
    )

    return l2_distance_modulo_phase(spec, gauge.psi, direct.psi)


def shape_deviation(result: PropagationResult) -> float:
    """L² deviation of |φ(x, t)| from |f(x - v_g·t)| at the end of the run"""
    spec = result.spec
    displacement = spec.group_velocity * (result.times[-1] - result.times[0])

    coefficients = _to_coefficients(spec, result.initial.psi)
    shifted = _from_coefficients(spec, coefficients * np.exp(-1j * spec.wavenumbers * displacement))

    return float(np.sqrt(np.sum((np.abs(result.psi) - np.abs(shifted)) ** 2) * spec.dx))


def linearize_potential(potential: Callable[[np.ndarray], ArrayLike], x_breaks: ArrayLike) -> FieldSpec:
    """Continuous piecewise linear approximation through potential(x_breaks) using chord slopes.

    The last cell continues with the slope of the last chord."""

    x_breaks = np.asarray(x_breaks, dtype=float)
    if x_breaks.size < 2:
        raise ValueError("At least two breakpoints are needed")

    if np.any(np.diff(x_breaks) <= 0):
        raise ValueError("The breakpoints must be strictly increasing")

    values = np.asarray(potential(x_breaks), dtype=float)
    slopes = np.diff(values) / np.diff(x_breaks)
    slopes = np.append(slopes, slopes[-1])

    return FieldSpec(
        kind=FieldKind.PIECEWISE_LINEAR,
        breakpoints=[
            Breakpoint(x=float(x), potential=float(v), slope=float(s))
            for x, v, s in zip(x_breaks, values, slopes)
        ],
    )


def default_step_count(spec: WavepacketSpec, duration: float) -> int:
    """Steps resolving the kinetic phase of the fastest significant component"""
    energy = (hbar * (spec.k0 + 4 * spec.delta_k)) ** 2 / (2 * spec.mass)
    dt = 2 * np.pi * hbar / energy / STEPS_PER_PERIOD
    return max(1, int(np.ceil(duration / dt)))


class _ConfinementMonitor:
    def __init__(self, field_spec: FieldSpec, strict: bool):
        self.field_spec = field_spec
        self.strict = strict
        self.violations: set[int] = set()

    def __call__(self, time: float, centroid: float, width: float) -> None:
        index = int(self.field_spec.cell_index(centroid))
        low, high = self.field_spec.cell_bounds(index)
        ratio = width / (high - low)

        if ratio <= CONFINEMENT_FRACTION:
            return

        message = (
            f"At t = {time:.4e} s the packet width {width:.4e} m exceeds a quarter of cell {index} "
            f"[{low:.4e}, {high:.4e}] m (ratio {ratio:.3f}, centroid {centroid:.4e} m)"
        )
        if self.strict:
            raise ConfinementError(message)

        if index not in self.violations:
            logger.warning(message)
            self.violations.add(index)


def _optional(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def build_cell_log(result: PropagationResult, field_spec: FieldSpec) -> list[CellLog]:
    """Splits the trajectory into contiguous stays per cell and fits the acceleration of each stay"""
    spec = result.spec
    cells = field_spec.cell_index(result.centroid)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(cells)) + 1])
    ends = np.append(starts[1:], cells.size)

    log = []
    for start, end in zip(starts, ends):
        index = int(cells[start])
        low, high = field_spec.cell_bounds(index)
        times = result.times[start:end]
        centroid = result.centroid[start:end]
        width = result.width[start:end]

        margin = np.minimum(centroid - low, high - centroid)
        inside = margin >= CELL_MARGIN * width
        max_width_ratio = float(np.max(width) / (high - low))

        slope = float(field_spec.slope(centroid[0]))
        expected = spec.charge * slope / spec.mass

        fitted = None
        error = None
        if np.count_nonzero(inside) >= MIN_FIT_SAMPLES:
            fitted = fit_acceleration(times[inside], centroid[inside])
            if expected != 0:
                error = abs(fitted / expected - 1)

        log.append(
            CellLog(
                cell=index,
                x_low=_optional(low),
                x_high=_optional(high),
                slope=slope,
                expected_acceleration=expected,
                fitted_acceleration=fitted,
                relative_error=error,
                t_enter=float(times[0]),
                t_exit=float(times[-1]),
                samples=int(end - start),
                fit_samples=int(np.count_nonzero(inside)),
                max_width_ratio=max_width_ratio,
                confined=max_width_ratio <= CONFINEMENT_FRACTION,
            )
        )

    return log


def propagate_cells(
    packet: Wavepacket,
    field_spec: FieldSpec,
    duration: float,
    n_steps: Optional[int] = None,
    n_samples: int = DEFAULT_SAMPLES,
    strict: bool = True,
) -> PropagationResult:
    """Split-step evolution in a piecewise linear potential, with a cell log.

    The packet width is monitored against a quarter of the width of the cell
    holding the centroid.

    Args:
        packet: The initial packet
        field_spec: A piecewise linear field
        duration: Propagation time [s]
        n_steps: Number of time steps, default from default_step_count
        n_samples: Number of trajectory samples
        strict: Raise on a confinement violation instead of logging it

    Returns:
        A PropagationResult whose cell_log holds one entry per stay in a cell

    Raises:
        ConfinementError: when strict and the packet outgrows its cell"""

    if field_spec.kind != FieldKind.PIECEWISE_LINEAR:
        raise ValueError(f"propagate_cells needs a piecewise linear field, got {field_spec.kind}")

    spec = packet.spec
    n_steps = n_steps or default_step_count(spec, duration)
    monitor = _ConfinementMonitor(field_spec, strict)

    result = propagate_split_operator(
        packet,
        field_spec.potential_energy(spec.x, spec.charge),
        duration,
        n_steps,
        n_samples=n_samples,
        field_spec=field_spec,
        monitor=monitor,
    )
    result.cell_log = build_cell_log(result, field_spec)

    for entry in result.cell_log:
        if entry.relative_error is not None:
            logger.info(
                f"Cell {entry.cell}: acceleration {entry.fitted_acceleration:.4e} m/s² "
                f"(expected {entry.expected_acceleration:.4e}, error {entry.relative_error:.2e})"
            )

    return result


def classical_trajectory(
    field_spec: Union[FieldSpec, Callable[[float], float]],
    x0: float,
    v0: float,
    times: ArrayLike,
    mass: float = m_e,
    charge: float = elementary_charge,
) -> tuple[np.ndarray, np.ndarray]:
    """Newtonian trajectory m·x'' = q·V′(x), integrated with solve_ivp.

    Args:
        field_spec: A FieldSpec or a function returning V′(x) [V/m]
        x0: Initial position [m]
        v0: Initial velocity [m/s]
        times: Output times [s], increasing
        mass: Particle mass [kg]
        charge: Particle charge [C]

    Returns:
        Positions and velocities at the output times"""

    slope = field_spec.slope if isinstance(field_spec, FieldSpec) else field_spec
    times = np.asarray(times, dtype=float)

    def rhs(_, state):
        return [state[1], charge * float(slope(state[0])) / mass]

    solution = solve_ivp(
        rhs,
        (times[0], times[-1]),
        [x0, v0],
        t_eval=times,
        method="DOP853",
        rtol=1e-10,
        atol=[1e-22, 1e-10],
    )

    if not solution.success:
        raise NumericalError(f"The classical trajectory failed: {solution.message}")

    return solution.y[0], solution.y[1]


class GroupVelocityRun(BaseModel):
    """Free propagation over a fixed number of packet widths"""

    ratio: float
    duration: float
    group_velocity: float
    fitted_velocity: float
    velocity_error: float
    shape_deviation: float
    norm_drift: float


def group_velocity_run(
    ratio: float = DEFAULT_RATIO,
    k0: float = DEFAULT_K0,
    travel_widths: float = DEFAULT_TRAVEL_WIDTHS,
    grid_points: int = DEFAULT_GRID_POINTS,
    n_samples: int = DEFAULT_SAMPLES,
) -> GroupVelocityRun:
    """Propagates a gaussian packet with Δk = ratio·k₀ over travel_widths initial widths.

    The dispersive broadening over this distance is proportional to ratio, so
    the shape deviation vanishes with it."""

    spec = WavepacketSpec.from_ratio(ratio, k0, grid_points=grid_points)
    packet = build_packet(spec)
    duration = travel_widths * spec.sigma_x / spec.group_velocity
    result = propagate_free(packet, duration, n_samples=n_samples)

    fitted = result.fitted_velocity()
    return GroupVelocityRun(
        ratio=ratio,
        duration=duration,
        group_velocity=spec.group_velocity,
        fitted_velocity=fitted,
        velocity_error=abs(fitted / spec.group_velocity - 1),
        shape_deviation=shape_deviation(result),
        norm_drift=result.norm_drift,
    )


def group_velocity_convergence(
    ratios: Sequence[float] = CONVERGENCE_RATIOS, max_workers: Optional[int] = 1, **kwargs
) -> list[GroupVelocityRun]:
    """group_velocity_run for every ratio, in input order"""
    return batch_map(partial(group_velocity_run, **kwargs), list(ratios), max_workers=max_workers)


class UniformFieldRun(BaseModel):
    """Uniform-field propagation checked against -qE/m and the direct split-step evolution"""

    field_strength: float
    duration: float
    expected_acceleration: float
    fitted_acceleration: float
    acceleration_error: float
    gauge_discrepancy: float
    norm_drift: float


def uniform_field_run(
    ratio: float = DEFAULT_RATIO,
    k0: float = DEFAULT_K0,
    travel_widths: float = DEFAULT_TRAVEL_WIDTHS,
    field_strength: Optional[float] = None,
    grid_points: int = DEFAULT_GRID_POINTS,
    n_samples: int = DEFAULT_SAMPLES,
    n_steps: int = DEFAULT_DIRECT_STEPS,
) -> UniformFieldRun:
    """Accelerates a packet in a uniform field.

    The default field changes the momentum by half of ħk₀ over the run, which
    lasts as long as free travel over travel_widths initial widths."""

    spec = WavepacketSpec.from_ratio(ratio, k0, grid_points=grid_points)
    packet = build_packet(spec)
    duration = travel_widths * spec.sigma_x / spec.group_velocity

    if field_strength is None:
        field_strength = DEFAULT_MOMENTUM_SHIFT * hbar * k0 / (spec.charge * duration)

    result = propagate_uniform_field(packet, field_strength, duration, n_samples=n_samples)
    expected = -spec.charge * field_strength / spec.mass
    fitted = result.fitted_acceleration()

    return UniformFieldRun(
        field_strength=field_strength,
        duration=duration,
        expected_acceleration=expected,
        fitted_acceleration=fitted,
        acceleration_error=abs(fitted / expected - 1) if expected != 0 else abs(fitted),
        gauge_discrepancy=gauge_vs_direct_discrepancy(packet, field_strength, duration, n_steps),
        norm_drift=result.norm_drift,
    )
