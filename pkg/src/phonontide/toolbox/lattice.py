"""
Periodic lattice potentials, phonon modes and deformation-potential packets.

All quantities are SI: lengths in meters, potentials in volts, masses in kg.
Lattice constants given in Ångström are converted with LatticeSpec.from_angstrom.
"""

import logging
from enum import StrEnum, auto
from typing import Self

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field, computed_field
from scipy.constants import angstrom, hbar
from scipy.constants import k as k_B
from scipy.integrate import simpson
from scipy.optimize import brentq

from phonontide.toolbox.exceptions import DegenerateModeError, RegimeError

logger = logging.getLogger(__name__)

DEFAULT_POINTS_PER_CELL = 64
MIN_POINTS_PER_CELL = 16
QUADRATURE_POINTS = 2001
SERIES_THRESHOLD = 1e-6  # below this |s| the envelope shape is evaluated by its series


def _envelope_shape_peak() -> tuple[float, float]:
    """Position and height of the maximum of sin²(s)/s (where tan s = 2s)"""
    s_peak = brentq(lambda s: np.tan(s) - 2 * s, 1.0, 1.4, xtol=1e-15)
    return s_peak, np.sin(s_peak) ** 2 / s_peak


SHAPE_PEAK_POSITION, SHAPE_PEAK_VALUE = _envelope_shape_peak()

# Scales the packet shape so that its maximum is exactly vbar0 / sqrt(2)
ENVELOPE_PREFACTOR = 1 / (np.sqrt(2) * SHAPE_PEAK_VALUE)


class Regime(StrEnum):
    HIGH_T = auto()
    LOW_T = auto()


class LatticeSpec(BaseModel):
    """A one-dimensional chain of n sites with a cos² site potential.

    Attributes:
        a (float): Lattice constant [m]
        n (int): Number of sites
        v0 (float): Amplitude of the site potential [V]
        ion_mass (float): Ion mass entering equipartition [kg]"""

    a: float = Field(gt=0)
    n: int = Field(ge=2)
    v0: float = Field(gt=0)
    ion_mass: float = Field(gt=0)

    @classmethod
    def from_angstrom(cls, a_angstrom: float, n: int, v0: float, ion_mass: float) -> Self:
        return cls(a=a_angstrom * angstrom, n=n, v0=v0, ion_mass=ion_mass)


class BathSpec(BaseModel):
    """The phonon bath.

    Attributes:
        temperature (float): Bath temperature [K]
        omega_d (float): Debye angular frequency [rad/s]
        upsilon (float): Velocity of sound [m/s]"""

    temperature: float = Field(ge=0)
    omega_d: float = Field(gt=0)
    upsilon: float = Field(gt=0)

    @computed_field
    @property
    def theta_d(self) -> float:
        """Debye temperature [K], k_B·Θ_d = ħ·ω_d"""
        return hbar * self.omega_d / k_B


class PhononMode(BaseModel):
    """A single phonon mode of the chain.

    Attributes:
        m_index (int): Mode integer, 1 <= m_index <= n/2
        k (float): Wavenumber 2πm/(na) [1/m]
        omega_k (float): Angular frequency ω_d·sin(πm/n) [rad/s]
        amplitude (float): Equipartition amplitude A_k [m]"""

    m_index: int = Field(ge=1)
    k: float = Field(gt=0)
    omega_k: float = Field(gt=0)
    amplitude: float = Field(ge=0)


class PhononPacket(BaseModel):
    """A traveling deformation-potential packet.

    The packet shape is sin²(s)/s with s = k_max·(x - υt)/2. For the high
    temperature regime k_max = π/a, for the low temperature regime k_max = k₀.

    Attributes:
        vbar0 (float): Packet amplitude V̄₀ [V], stored without the 1/√n factor
        upsilon (float): Propagation speed [m/s]
        a (float): Lattice constant [m]
        k_max (float): Largest contributing wavenumber [1/m]
        regime (Regime): Temperature regime the packet was built for"""

    vbar0: float = Field(ge=0)
    upsilon: float = Field(ge=0)
    a: float = Field(gt=0)
    k_max: float = Field(gt=0)
    regime: Regime = Regime.HIGH_T

    @property
    def barrier_height(self) -> float:
        """Maximum of the envelope, V̄₀/√2 [V]"""
        return self.vbar0 / np.sqrt(2)

    @property
    def length_scale(self) -> float:
        """Length corresponding to a unit step in the shape argument s [m]"""
        return 2 / self.k_max


def _as_output(values: np.ndarray, like: ArrayLike) -> float | np.ndarray:
    """Returns a float for scalar input and an array otherwise"""
    if np.ndim(like) == 0:
        return float(values)
    return values


def site_potential(x: ArrayLike, spec: LatticeSpec) -> float | np.ndarray:
    """The single-site potential V(x) = V0·cos²(πx/a) for |x| <= a/2, else 0"""
    x_arr = np.asarray(x, dtype=float)
    values = np.where(
        np.abs(x_arr) <= spec.a / 2, spec.v0 * np.cos(np.pi * x_arr / spec.a) ** 2, 0.0
    )
    return _as_output(values, x)


def site_gradient_profile(x: ArrayLike, spec: LatticeSpec) -> float | np.ndarray:
    """Gradient kernel entering the deformation potential of a displaced site.

    The kernel is -V0·(2π/a)·sin(2πx/a) on the site support. This is the
    normalization on which the closed form of a₀ is built; it is twice the
    slope of the cos² site potential."""
    x_arr = np.asarray(x, dtype=float)
    values = np.where(
        np.abs(x_arr) <= spec.a / 2,
        -spec.v0 * (2 * np.pi / spec.a) * np.sin(2 * np.pi * x_arr / spec.a),
        0.0,
    )
    return _as_output(values, x)


def build_potential(
    spec: LatticeSpec, points_per_cell: int = DEFAULT_POINTS_PER_CELL
) -> tuple[np.ndarray, np.ndarray]:
    """Samples U(x) = Σ_l V(x - la) for the sites l = 0 .. n-1.

    The grid covers [-a/2, (n - 1)a + a/2] with points_per_cell intervals
    per lattice constant. Neighbouring site supports only touch at the cell
    edges, where both vanish, so each sample is evaluated for its nearest site.

    Args:
        spec: The lattice
        points_per_cell: Grid resolution, at least 16

    Returns:
        A tuple (x, u) with positions [m] and potential values [V]"""

    if points_per_cell < MIN_POINTS_PER_CELL:
        raise ValueError(
            f"points_per_cell must be at least {MIN_POINTS_PER_CELL}, got {points_per_cell}"
        )

    cells = np.arange(spec.n * points_per_cell + 1) / points_per_cell - 0.5
    x = cells * spec.a
    nearest_site = np.clip(np.rint(cells), 0, spec.n - 1)
    u = site_potential((cells - nearest_site) * spec.a, spec)

    return x, u


def fourier_a0(spec: LatticeSpec, m_index: int) -> complex:
    """Cell average a₀ of the periodic part p(x) for the mode k = 2πm/(na).

    a₀ = i·(2V0/a)·sin(πm/n)/(1 - (m/n)²), purely imaginary.

    Args:
        spec: The lattice
        m_index: The mode integer, 0 <= m_index < n

    Returns:
        The complex coefficient a₀ [V/m]"""

    if not 0 <= m_index < spec.n:
        raise ValueError(f"m_index must satisfy 0 <= m_index < n ({spec.n}), got {m_index}")

    ratio = m_index / spec.n
    return 1j * (2 * spec.v0 / spec.a) * np.sin(np.pi * ratio) / (1 - ratio**2)


def fourier_a0_quadrature(
    spec: LatticeSpec, m_index: int, points: int = QUADRATURE_POINTS
) -> complex:
    """a₀ = (1/a)∫p(x)dx over one period, evaluated with Simpson's rule.

    p(x) = Σ_l G(x - la)·exp(-ik(x - la)) with G the site gradient profile.
    The site of the cell and both its neighbours are summed."""

    if not 0 <= m_index < spec.n:
        raise ValueError(f"m_index must satisfy 0 <= m_index < n ({spec.n}), got {m_index}")

    k = 2 * np.pi * m_index / (spec.n * spec.a)
    x = np.linspace(-spec.a / 2, spec.a / 2, points)

    p = np.zeros_like(x, dtype=complex)
    for site in (-1, 0, 1):
        local = x - site * spec.a
        p += site_gradient_profile(local, spec) * np.exp(-1j * k * local)

    return complex(simpson(p, x=x) / spec.a)


def thermal_displacement(spec: LatticeSpec, bath: BathSpec) -> float:
    """The displacement scale sqrt(k_B·T/m)/ω_d [m]"""
    return np.sqrt(k_B * bath.temperature / spec.ion_mass) / bath.omega_d


def equipartition_amplitude(spec: LatticeSpec, bath: BathSpec, m_index: int) -> float:
    """Mode amplitude from k_B·T of energy per mode.

    A_k = sqrt(k_B·T/m) / (ω_d·sin(πm/n))

    Args:
        spec: The lattice
        bath: The phonon bath
        m_index: The mode integer, 1 <= m_index < n

    Returns:
        The amplitude A_k [m]"""

    if m_index == 0:
        raise DegenerateModeError(
            "m_index = 0 is a zero-frequency mode; its amplitude is undefined"
        )

    if not 0 < m_index < spec.n:
        raise ValueError(f"m_index must satisfy 0 < m_index < n ({spec.n}), got {m_index}")

    return thermal_displacement(spec, bath) / np.sin(np.pi * m_index / spec.n)


def phonon_mode(spec: LatticeSpec, bath: BathSpec, m_index: int) -> PhononMode:
    """Creates the PhononMode for 1 <= m_index <= n/2"""
    if m_index > spec.n / 2:
        raise ValueError(f"m_index must not exceed n/2 ({spec.n / 2}), got {m_index}")

    amplitude = equipartition_amplitude(spec, bath, m_index)

    return PhononMode(
        m_index=m_index,
        k=2 * np.pi * m_index / (spec.n * spec.a),
        omega_k=bath.omega_d * np.sin(np.pi * m_index / spec.n),
        amplitude=amplitude,
    )


def vbar0(spec: LatticeSpec, bath: BathSpec) -> float:
    """Packet amplitude V̄₀ = (2V0/a)·sqrt(k_B·T/m)/ω_d [V], proportional to √T"""
    return 2 * spec.v0 / spec.a * thermal_displacement(spec, bath)


def per_mode_amplitude(spec: LatticeSpec, bath: BathSpec) -> float:
    """Deformation-potential amplitude of a single mode, V̄₀/√n [V]"""
    return vbar0(spec, bath) / np.sqrt(spec.n)


def mode_deformation_amplitude(spec: LatticeSpec, bath: BathSpec, m_index: int) -> float:
    """|a₀(m)|·A_k, which reduces to V̄₀/(1 - (m/n)²)"""
    return abs(fourier_a0(spec, m_index)) * equipartition_amplitude(spec, bath, m_index)


def low_temperature_cutoff(bath: BathSpec) -> float:
    """k₀ from ħ·υ·k₀ = k_B·T (linear dispersion) [1/m]"""
    return k_B * bath.temperature / (hbar * bath.upsilon)


def packet_from_modes(spec: LatticeSpec, bath: BathSpec, regime: Regime) -> PhononPacket:
    """Creates the phonon packet of the bath for the given regime.

    In the high temperature regime all modes up to π/a are excited and
    V̄₀ ∝ √T. In the low temperature regime only modes below k₀ are excited,
    and the 1/√(n·m₀) normalization turns the amplitude into
    2·sqrt(k₀a/2π)·V̄₀(T), which is ∝ T. The width of the packet then grows
    as 1/k₀.

    Args:
        spec: The lattice
        bath: The phonon bath
        regime: The temperature regime

    Returns:
        A PhononPacket"""

    if regime == Regime.HIGH_T:
        if bath.temperature < bath.theta_d:
            logger.warning(
                f"High temperature packet requested at T = {bath.temperature} K, "
                f"below the Debye temperature {bath.theta_d:.3f} K"
            )

        return PhononPacket(
            vbar0=vbar0(spec, bath),
            upsilon=bath.upsilon,
            a=spec.a,
            k_max=np.pi / spec.a,
            regime=regime,
        )

    if bath.temperature >= bath.theta_d:
        raise RegimeError(
            f"The low temperature regime requires T < Θ_d, got T = {bath.temperature} K "
            f"and Θ_d = {bath.theta_d:.3f} K"
        )

    if bath.temperature == 0:
        raise RegimeError("The low temperature packet requires T > 0")

    k0 = low_temperature_cutoff(bath)

    if k0 > np.pi / spec.a:
        logger.warning(
            f"k0 = {k0:.4e} 1/m exceeds the zone boundary; it is capped at π/a"
        )
        k0 = np.pi / spec.a

    amplitude = 2 * np.sqrt(k0 * spec.a / (2 * np.pi)) * vbar0(spec, bath)

    return PhononPacket(
        vbar0=amplitude, upsilon=bath.upsilon, a=spec.a, k_max=k0, regime=regime
    )


def envelope_shape(s: ArrayLike) -> float | np.ndarray:
    """sin²(s)/s, with the removable singularity at s = 0 evaluated by its series"""
    s_arr = np.asarray(s, dtype=float)
    small = np.abs(s_arr) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, s_arr)
    values = np.where(small, s_arr - s_arr**3 / 3, np.sin(safe) ** 2 / safe)
    return _as_output(values, s)


def envelope_shape_derivative(s: ArrayLike) -> float | np.ndarray:
    """d/ds of sin²(s)/s"""
    s_arr = np.asarray(s, dtype=float)
    small = np.abs(s_arr) < SERIES_THRESHOLD
    safe = np.where(small, 1.0, s_arr)
    values = np.where(
        small, 1 - s_arr**2, np.sin(2 * safe) / safe - np.sin(safe) ** 2 / safe**2
    )
    return _as_output(values, s)


def packet_envelope(packet: PhononPacket, x: ArrayLike, t: float = 0.0) -> float | np.ndarray:
    """The traveling deformation potential of the packet [V].

    Evaluates V̄₀·c·sin²(s)/s with s = k_max·(x - υt)/2. The prefactor c makes
    the maximum exactly V̄₀/√2.

    Args:
        packet: The phonon packet
        x: Position(s) [m]
        t: Time [s]

    Returns:
        The potential at x"""

    s = packet.k_max * (np.asarray(x, dtype=float) - packet.upsilon * t) / 2
    values = ENVELOPE_PREFACTOR * packet.vbar0 * envelope_shape(s)
    return _as_output(values, x)


def synthesize_packet(
    spec: LatticeSpec, bath: BathSpec, regime: Regime, x: ArrayLike, chunk_size: int = 1024
) -> np.ndarray:
    """Deformation potential of the packet by explicit summation over modes.

    ΔU(x) = (2/N)·Σ_m |a₀(m)|·A_m·sin(k_m·x), where N = n and m <= n/2 in the
    high temperature regime, and N = sqrt(n·m₀) and m <= m₀ in the low
    temperature regime.

    Args:
        spec: The lattice
        bath: The phonon bath
        regime: The temperature regime
        x: Positions relative to the packet center [m]
        chunk_size: Number of modes summed at once

    Returns:
        The synthesized potential at x [V]"""

    x = np.atleast_1d(np.asarray(x, dtype=float))

    if regime == Regime.HIGH_T:
        m_max = spec.n // 2
        norm = spec.n
    else:
        k0 = low_temperature_cutoff(bath)
        m_max = int(np.floor(k0 * spec.n * spec.a / (2 * np.pi)))

        if m_max < 1:
            raise ValueError(
                f"No mode lies below k0 = {k0:.4e} 1/m for n = {spec.n}; increase n_sites"
            )

        norm = np.sqrt(spec.n * m_max)

    potential = np.zeros_like(x)

    for start in range(1, m_max + 1, chunk_size):
        m = np.arange(start, min(start + chunk_size, m_max + 1))
        ratio = m / spec.n
        a0 = (2 * spec.v0 / spec.a) * np.sin(np.pi * ratio) / (1 - ratio**2)
        amplitude = thermal_displacement(spec, bath) / np.sin(np.pi * ratio)
        k = 2 * np.pi * m / (spec.n * spec.a)
        potential += np.sin(np.outer(x, k)) @ (a0 * amplitude)

    logger.debug(f"Synthesized {regime} packet from {m_max} modes")

    return 2 * potential / norm


def _cell_average_2d(kernel, spec: LatticeSpec, m_index: int, points: int) -> complex:
    """(1/a²)∫∫p(x, y)dxdy over one cell, with p built from the given kernel"""
    if not 0 <= m_index < spec.n:
        raise ValueError(f"m_index must satisfy 0 <= m_index < n ({spec.n}), got {m_index}")

    k = 2 * np.pi * m_index / (spec.n * spec.a)
    x = np.linspace(-spec.a / 2, spec.a / 2, points)
    xx, yy = np.meshgrid(x, x, indexing="ij")

    p = np.zeros_like(xx, dtype=complex)
    for site_x in (-1, 0, 1):
        for site_y in (-1, 0, 1):
            local_x = xx - site_x * spec.a
            local_y = yy - site_y * spec.a
            p += kernel(local_x, local_y) * np.exp(-1j * k * local_x)

    return complex(simpson(simpson(p, x=x, axis=1), x=x) / spec.a**2)


def _on_support(x: np.ndarray, y: np.ndarray, a: float) -> np.ndarray:
    return (np.abs(x) <= a / 2) & (np.abs(y) <= a / 2)


def transverse_2d_a0(spec: LatticeSpec, m_index: int, points: int = 201) -> complex:
    """Cell average of p(x, y) for transverse displacements along x-propagation.

    Built from V_y of the separable potential V0·cos²(πx/a)·cos²(πy/a);
    the kernel is odd in y, so the average vanishes."""

    def kernel(x, y):
        return np.where(
            _on_support(x, y, spec.a),
            -spec.v0 * (2 * np.pi / spec.a) * np.sin(2 * np.pi * y / spec.a)
            * np.cos(np.pi * x / spec.a) ** 2,
            0.0,
        )

    return _cell_average_2d(kernel, spec, m_index, points)


def longitudinal_2d_a0(spec: LatticeSpec, m_index: int, points: int = 201) -> complex:
    """Cell average of p(x, y) for longitudinal displacements, built from V_x.

    The y-average of cos²(πy/a) is 1/2, so this is half of fourier_a0."""

    def kernel(x, y):
        return np.where(
            _on_support(x, y, spec.a),
            -spec.v0 * (2 * np.pi / spec.a) * np.sin(2 * np.pi * x / spec.a)
            * np.cos(np.pi * y / spec.a) ** 2,
            0.0,
        )

    return _cell_average_2d(kernel, spec, m_index, points)
