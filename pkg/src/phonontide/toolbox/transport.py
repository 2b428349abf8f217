"""
Forward scattering of Fermi electrons on phonon tides and the resistivity laws.

An electron at the Fermi velocity rebounds from a tide when the velocity
component normal to the tide cannot climb the barrier. The largest such
incidence angle θ₀ and the sphere of contributing phonon wavenumbers (radius
π/a at high temperature, k₀ ∝ T at low temperature) give the forward
scattering rate, which is ∝ T above and ∝ T⁵ well below the Debye temperature.
"""

import logging
from functools import partial
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field, model_validator
from scipy.constants import angstrom
from scipy.constants import e as elementary_charge
from scipy.constants import m_e
from scipy.integrate import quad
from scipy.stats import linregress

from phonontide.toolbox.exceptions import (InsufficientPointsError,
                                           RegimeError, SaturationError)
from phonontide.toolbox.lattice import (BathSpec, LatticeSpec, PhononPacket,
                                        Regime, packet_from_modes)
from phonontide.utils.parallel_utils import batch_map

logger = logging.getLogger(__name__)

SMALL_ANGLE_LIMIT = 0.3  # rad
LOW_T_FRACTION = 0.1  # low temperature sweeps stay below this fraction of Θ_d
MIN_SWEEP_POINTS = 8
MIN_SWEEP_DECADES = 1.0
ASYMPTOTIC_EXPONENTS = {Regime.HIGH_T: 1.0, Regime.LOW_T: 5.0}
RATE_EXPRESSION = "2*pi*R^3 * integral_0^theta0 (1 - cos 2θ) sin θ dθ, R in 1/m"


class TransportSpec(BaseModel):
    """Electron and phonon parameters for the forward scattering rate.

    Attributes:
        v_f (float): Fermi velocity [m/s]
        electron_mass (float): Electron mass [kg]
        charge (float): Charge magnitude [C]
        lattice (LatticeSpec): The lattice
        bath (BathSpec): The phonon bath
        regime (Regime): Temperature regime"""

    v_f: float = Field(gt=0)
    electron_mass: float = Field(default=m_e, gt=0)
    charge: float = Field(default=elementary_charge, gt=0)
    lattice: LatticeSpec
    bath: BathSpec
    regime: Regime = Regime.HIGH_T

    @model_validator(mode="after")
    def check_regime(self):
        if self.regime == Regime.LOW_T and self.bath.temperature >= self.bath.theta_d:
            raise ValueError(
                f"The low temperature regime requires T < Θ_d ({self.bath.theta_d:.3f} K), "
                f"got {self.bath.temperature} K"
            )

        return self

    @property
    def fermi_energy(self) -> float:
        return 0.5 * self.electron_mass * self.v_f**2

    def packet(self) -> PhononPacket:
        return packet_from_modes(self.lattice, self.bath, self.regime)

    @property
    def radius(self) -> float:
        """Radius R of the sphere of contributing phonon wavenumbers [1/m]"""
        return self.packet().k_max

    def at_temperature(self, temperature: float) -> "TransportSpec":
        bath = self.bath.model_copy(update={"temperature": temperature})
        return self.model_copy(update={"bath": bath})


class ThresholdAngle(BaseModel):
    """The largest scattering angle. saturated means every angle scatters."""

    theta0: float = Field(ge=0, le=np.pi / 2)
    sin2_theta0: float = Field(ge=0, le=1)
    saturated: bool = False


class RateResult(BaseModel):
    """Forward scattering at a single temperature.

    Attributes:
        temperature (float): Bath temperature [K]
        theta0 (float): Largest scattering angle [rad]
        rate (float): Forward scattering rate, see RATE_EXPRESSION
        radius (float): Phonon sphere radius [1/m]
        vbar0 (float): Packet amplitude [V]
        saturated (bool): Whether theta0 saturated at pi/2"""

    temperature: float
    theta0: float = Field(ge=0, le=np.pi / 2)
    rate: float = Field(ge=0)
    radius: float = Field(gt=0)
    vbar0: float = Field(ge=0)
    saturated: bool = False


class SweepPoint(RateResult):
    """A sweep point with its local log-log slope and the deviation from the asymptotic exponent"""

    local_slope: float
    deviation: float


class SweepResult(BaseModel):
    """Temperature sweep with the fitted power law rate ∝ T^slope.

    Attributes:
        regime (Regime): Temperature regime
        points (list[SweepPoint]): Sweep points, ordered by temperature
        slope (float): Fitted exponent
        intercept (float): Fitted log prefactor
        residual (float): rms residual of the log-log fit
        small_angle_valid (bool): Whether theta0 < 0.3 rad at every point
        rate_expression (str): Definition of the rate and its units"""

    regime: Regime
    points: list[SweepPoint]
    slope: float
    intercept: float
    residual: float
    small_angle_valid: bool
    rate_expression: str = RATE_EXPRESSION

    @property
    def expected_exponent(self) -> float:
        return ASYMPTOTIC_EXPONENTS[self.regime]

    def get_by_temperature(self, temperature: float) -> SweepPoint:
        """Returns the point at the given temperature (relative tolerance 1e-12)"""
        point = next(
            (p for p in self.points if np.isclose(p.temperature, temperature, rtol=1e-12, atol=0)), None
        )

        if point is None:
            raise NameError(f"Could not find a sweep point at T = {temperature} K")

        return point


def threshold_angle(spec: TransportSpec) -> ThresholdAngle:
    """θ₀ from ½·m·v_F²·sin²θ₀ = q·V̄₀/√2.

    If the barrier exceeds the kinetic energy every angle scatters; π/2 is
    returned with the saturation flag set."""

    packet = spec.packet()
    ratio = spec.charge * packet.barrier_height / spec.fermi_energy

    if ratio >= 1:
        logger.warning(
            f"The barrier {packet.barrier_height:.4f} V exceeds the Fermi energy at "
            f"T = {spec.bath.temperature} K; theta0 saturates at pi/2"
        )
        return ThresholdAngle(theta0=np.pi / 2, sin2_theta0=1.0, saturated=True)

    return ThresholdAngle(theta0=float(np.arcsin(np.sqrt(ratio))), sin2_theta0=ratio)


def theta0(spec: TransportSpec) -> float:
    """The largest scattering angle θ₀ [rad]"""
    return threshold_angle(spec).theta0


def _check_angle(theta: float) -> None:
    if not 0 <= theta <= np.pi / 2:
        raise ValueError(f"theta0 must lie in [0, pi/2], got {theta}")


def forward_rate(theta: float, radius: float) -> float:
    """Forward scattering rate 2πR³∫₀^θ₀(1 - cos 2θ)·sin θ dθ.

    Evaluated as 4πR³·d²·(1 - d/3) with d = 1 - cos θ₀ = 2·sin²(θ₀/2), which
    equals 4πR³·(2/3 - cos θ₀ + cos³θ₀/3) without its cancellation at small θ₀.

    Args:
        theta: The largest scattering angle θ₀ [rad]
        radius: The phonon sphere radius R

    Returns:
        The rate, which scales as θ₀⁴ for small angles"""

    _check_angle(theta)

    d = 2 * np.sin(theta / 2) ** 2
    return float(4 * np.pi * radius**3 * d**2 * (1 - d / 3))


def forward_rate_quadrature(theta: float, radius: float) -> float:
    """forward_rate by adaptive quadrature of its integrand"""
    _check_angle(theta)

    value, _ = quad(
        lambda t: 2 * np.sin(t) ** 2 * np.sin(t), 0, theta, epsabs=0, epsrel=1e-12, limit=200
    )
    return 2 * np.pi * radius**3 * value


def rate_at_temperature(template: TransportSpec, temperature: float) -> RateResult:
    """Evaluates θ₀ and the forward rate at the given temperature"""
    spec = template.at_temperature(temperature)
    packet = spec.packet()
    angle = threshold_angle(spec)

    return RateResult(
        temperature=temperature,
        theta0=angle.theta0,
        rate=forward_rate(angle.theta0, packet.k_max),
        radius=packet.k_max,
        vbar0=packet.vbar0,
        saturated=angle.saturated,
    )


def check_sweep_temperatures(temperatures: np.ndarray, bath: BathSpec, regime: Regime) -> None:
    """Checks the number, range and regime of the sweep temperatures"""

    if len(temperatures) < MIN_SWEEP_POINTS:
        raise InsufficientPointsError(
            f"A sweep needs at least {MIN_SWEEP_POINTS} temperatures, got {len(temperatures)}"
        )

    if np.any(temperatures <= 0):
        raise ValueError("All sweep temperatures must be positive")

    if np.log10(temperatures.max() / temperatures.min()) < MIN_SWEEP_DECADES - 1e-12:
        raise InsufficientPointsError(
            f"The sweep temperatures must span at least {MIN_SWEEP_DECADES:g} decade, got "
            f"{temperatures.min()} K to {temperatures.max()} K"
        )

    if regime == Regime.HIGH_T and temperatures.min() <= bath.theta_d:
        raise RegimeError(
            f"A high temperature sweep requires T > Θ_d = {bath.theta_d:.3f} K, "
            f"got {temperatures.min()} K"
        )

    if regime == Regime.LOW_T and temperatures.max() >= LOW_T_FRACTION * bath.theta_d:
        raise RegimeError(
            f"A low temperature sweep requires T < Θ_d/10 = "
            f"{LOW_T_FRACTION * bath.theta_d:.3f} K, got {temperatures.max()} K"
        )


def resistivity_sweep(
    template: TransportSpec,
    temperatures: ArrayLike,
    regime: Optional[Regime] = None,
    max_workers: Optional[int] = 1,
) -> SweepResult:
    """Sweeps the temperature and fits log(rate) against log(T).

    Points with θ₀ >= 0.3 rad are kept, but clear the small_angle_valid flag.
    Every point carries its local log-log slope and the deviation from the
    asymptotic exponent (1 at high, 5 at low temperature).

    Args:
        template: Transport parameters; its bath temperature is replaced
        temperatures: Sweep temperatures [K], at least 8 spanning a decade
        regime: Temperature regime, default is the regime of the template
        max_workers: Number of worker processes for the sweep points

    Returns:
        A SweepResult"""

    regime = regime or template.regime
    template = template.model_copy(update={"regime": regime})
    temperatures = np.sort(np.asarray(temperatures, dtype=float))

    check_sweep_temperatures(temperatures, template.bath, regime)

    rates = batch_map(
        partial(rate_at_temperature, template), temperatures.tolist(), max_workers=max_workers
    )

    saturated = [r.temperature for r in rates if r.saturated]
    if saturated:
        raise SaturationError(
            f"theta0 saturates at pi/2 for T = {saturated} K; the barrier exceeds the Fermi energy"
        )

    log_t = np.log(temperatures)
    log_rate = np.log([r.rate for r in rates])

    fit = linregress(log_t, log_rate)
    residual = float(np.sqrt(np.mean((log_rate - (fit.intercept + fit.slope * log_t)) ** 2)))

    local_slopes = np.gradient(log_rate, log_t)
    expected = ASYMPTOTIC_EXPONENTS[regime]

    points = [
        SweepPoint(**r.model_dump(), local_slope=s, deviation=s - expected)
        for r, s in zip(rates, local_slopes)
    ]

    small_angle_valid = all(r.theta0 < SMALL_ANGLE_LIMIT for r in rates)
    if not small_angle_valid:
        logger.warning(
            f"theta0 reaches {max(r.theta0 for r in rates):.3f} rad; the fitted exponent "
            "carries finite-angle corrections"
        )

    logger.info(f"{regime} sweep: slope {fit.slope:.5f}, residual {residual:.3e}")

    return SweepResult(
        regime=regime,
        points=points,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        residual=residual,
        small_angle_valid=small_angle_valid,
    )


def default_transport_template(regime: Regime = Regime.HIGH_T) -> TransportSpec:
    """Parameters for which the default sweeps stay below θ₀ = 0.3 rad.

    a = 3 Å, V0 = 2 V, ω_d = 1e13 rad/s (Θ_d ≈ 76.4 K), υ = ω_d·a/2 and
    v_F = 1.5e6 m/s."""

    a = 3 * angstrom
    omega_d = 1e13
    temperature = 300.0 if regime == Regime.HIGH_T else 1.0

    return TransportSpec(
        v_f=1.5e6,
        lattice=LatticeSpec(a=a, n=1000, v0=2.0, ion_mass=1.054e-25),
        bath=BathSpec(temperature=temperature, omega_d=omega_d, upsilon=omega_d * a / 2),
        regime=regime,
    )


def default_temperatures(bath: BathSpec, regime: Regime, points: int = 10) -> np.ndarray:
    """One decade of temperatures inside the regime: 1.3 to 13 Θ_d, or 0.009 to 0.09 Θ_d"""
    if regime == Regime.HIGH_T:
        return np.geomspace(1.3, 13, points) * bath.theta_d

    return np.geomspace(0.009, 0.09, points) * bath.theta_d
