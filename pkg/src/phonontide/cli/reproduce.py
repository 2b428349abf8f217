"""
The acceptance suite: every experiment with its bounds, written to one output directory
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.constants import k as k_B
from scipy.constants import m_e
from scipy.optimize import minimize_scalar

from phonontide.cli.result_writer import (AcceptanceCheck, RunManifest,
                                          RunOutput, write_relaxation,
                                          write_sweep)
from phonontide.toolbox.collision import (ElectronState, Geometry,
                                          barrier_energy, brute_force_sweep,
                                          collide_1d, packet_velocity)
from phonontide.toolbox.ensemble import (EnsembleState, fermi_energy,
                                         relax)
from phonontide.toolbox.exceptions import NumericalError
from phonontide.toolbox.lattice import (BathSpec, LatticeSpec, PhononPacket,
                                        Regime, fourier_a0,
                                        fourier_a0_quadrature,
                                        longitudinal_2d_a0, packet_envelope,
                                        packet_from_modes, transverse_2d_a0)
from phonontide.toolbox.qwave import (CONVERGENCE_RATIOS, DEFAULT_RATIO,
                                      group_velocity_convergence,
                                      uniform_field_run)
from phonontide.toolbox.transport import (SMALL_ANGLE_LIMIT,
                                          default_temperatures,
                                          default_transport_template,
                                          forward_rate,
                                          forward_rate_quadrature,
                                          resistivity_sweep)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 2024
BARRIER_BAND = 0.005  # relative distance to the barrier energy left out of the threshold comparison
THETA0_VALUES = (5e-4, 1e-3, 2e-3, 4e-3)


class ReproduceSettings(BaseModel):
    """Settings of the acceptance suite.

    Attributes:
        seed (int): Seed of the relaxation run
        max_workers (int | None): Worker processes for sweeps and convergence runs
        relax_levels (int): Number of speed levels of the relaxation run
        relax_electrons (int): Number of electrons of the relaxation run
        relax_steps (int): Number of Monte Carlo steps of the relaxation run"""

    seed: int = Field(default=DEFAULT_SEED, ge=0)
    max_workers: Optional[int] = Field(default=1, ge=1)
    relax_levels: int = Field(default=200, ge=2)
    relax_electrons: int = Field(default=50, ge=1)
    relax_steps: int = Field(default=1_000_000, ge=20)


def _bounded(
    number: int,
    name: str,
    quantity: str,
    value: float,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
    detail: str = "",
) -> AcceptanceCheck:
    """A check that passes when value is finite and inside [lower, upper]"""
    value = float(value)
    passed = (
        math.isfinite(value)
        and (lower is None or value >= lower)
        and (upper is None or value <= upper)
    )
    return AcceptanceCheck(
        number=number, name=name, quantity=quantity, value=value, lower=lower, upper=upper,
        passed=passed, detail=detail,
    )


def check_fourier_a0(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    rows = []

    for n in (4, 8, 16, 64):
        spec = LatticeSpec(a=3e-10, n=n, v0=2.0, ion_mass=1e-25)
        for m in range(1, math.ceil(n / 2)):
            closed = fourier_a0(spec, m)
            numeric = fourier_a0_quadrature(spec, m)
            rows.append([n, m, closed.imag, numeric.real, numeric.imag, abs(closed - numeric) / abs(closed)])

    output.write_csv(
        "fourier_a0.csv",
        ["n_sites", "m_index", "closed_imag", "quadrature_real", "quadrature_imag", "relative_error"],
        rows,
    )

    worst = max(row[-1] for row in rows)
    return [_bounded(1, "fourier_a0", "max_relative_error", worst, upper=1e-8, detail=f"{len(rows)} modes")]


def check_transverse_2d(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    spec = LatticeSpec.from_angstrom(3.0, n=32, v0=10.0, ion_mass=1e-25)
    scale = spec.v0 * 2 * np.pi / spec.a
    rows = []

    for m in range(1, 11):
        transverse = transverse_2d_a0(spec, m)
        longitudinal = longitudinal_2d_a0(spec, m)
        rows.append([m, transverse.real, transverse.imag, abs(transverse) / scale, longitudinal.imag])

    output.write_csv(
        "transverse_2d.csv",
        ["m_index", "transverse_real", "transverse_imag", "transverse_normalized", "longitudinal_imag"],
        rows,
    )

    worst = max(row[3] for row in rows)
    return [_bounded(2, "transverse_2d", "max_normalized_a0", worst, upper=1e-10)]


def check_packet_maximum(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    template = default_transport_template(Regime.HIGH_T)
    packet = packet_from_modes(template.lattice, template.bath, Regime.HIGH_T)

    res = minimize_scalar(
        lambda x: -packet_envelope(packet, x),
        bounds=(0.1 * packet.a, 1.5 * packet.a),
        method="bounded",
        options={"xatol": 1e-14},
    )
    maximum = -float(res.fun)
    error = abs(maximum / packet.barrier_height - 1)

    x = np.linspace(-20, 20, 2001) * packet.length_scale
    output.write_csv("packet_envelope.csv", ["x_m", "envelope_v"], zip(x, packet_envelope(packet, x)))

    return [
        _bounded(
            3, "packet_maximum", "relative_error", error, upper=0.005,
            detail=f"maximum {maximum!r} V at x = {float(res.x)!r} m, vbar0 {packet.vbar0!r} V",
        )
    ]


def check_collision_threshold(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    packet = PhononPacket(vbar0=1.0, upsilon=0.0, a=3e-10, k_max=np.pi / 3e-10)
    barrier = barrier_energy(packet)
    w_star = np.sqrt(2 * barrier / m_e)

    v_values = np.linspace(0.3, 1.5, 20) * w_star
    upsilon_values = np.linspace(0.0, 0.5, 20) * w_star
    v_grid, upsilon_grid = np.meshgrid(v_values, upsilon_values, indexing="ij")
    v_grid, upsilon_grid = v_grid.ravel(), upsilon_grid.ravel()
    w = v_grid + upsilon_grid

    # The oracle works in the packet frame; w is the incident speed relative to the packet
    kinds, w_out, drift, _ = brute_force_sweep(w, packet)
    in_band = np.abs(0.5 * m_e * w**2 / barrier - 1) < BARRIER_BAND

    rows = []
    disagreements = 0
    bookkeeping_errors = 0
    worst_mismatch = 0.0

    for geometry in Geometry:
        # A co-moving electron 2υ faster than its head-on partner meets the packet at the same w
        shift = 2 * upsilon_grid if geometry == Geometry.CO_MOVING else np.zeros_like(upsilon_grid)

        for index, (v, upsilon) in enumerate(zip(v_grid + shift, upsilon_grid)):
            moving = packet.model_copy(update={"upsilon": float(upsilon)})
            analytic = collide_1d(ElectronState(v=float(v)), moving, geometry)

            oracle_v_out = packet_velocity(moving, geometry) + w_out[index]
            mismatch = float(np.nan_to_num(abs(oracle_v_out - analytic.v_out) / w[index], nan=np.inf))
            agree = kinds[index] == analytic.kind and mismatch < 1e-6

            if not in_band[index]:
                worst_mismatch = max(worst_mismatch, mismatch)
                if not agree:
                    disagreements += 1
            if analytic.delta_e_electron + analytic.delta_e_phonon != 0:
                bookkeeping_errors += 1

            rows.append(
                [geometry, v, upsilon, w[index], analytic.kind, kinds[index], analytic.v_out, oracle_v_out,
                 drift[index], in_band[index], agree]
            )

    output.write_csv(
        "collision_threshold.csv",
        ["geometry", "v_mps", "upsilon_mps", "w_mps", "analytic_kind", "oracle_kind", "analytic_v_out_mps",
         "oracle_v_out_mps", "energy_drift", "in_band", "agree"],
        rows,
    )

    finite_drift = drift[np.isfinite(drift)]
    return [
        _bounded(4, "collision_threshold", "disagreements_outside_band", disagreements, upper=0,
                 detail=f"{len(rows)} grid points over {len(Geometry)} geometries"),
        _bounded(4, "collision_threshold", "max_velocity_mismatch", worst_mismatch, upper=1e-6),
        _bounded(4, "collision_threshold", "bookkeeping_errors", bookkeeping_errors, upper=0),
        _bounded(4, "collision_threshold", "max_energy_drift",
                 finite_drift.max() if finite_drift.size else 0.0, upper=1e-6),
    ]


def check_relaxation(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    upsilon = 5000.0
    state = EnsembleState.create(
        n_levels=settings.relax_levels,
        n_electrons=settings.relax_electrons,
        upsilon=upsilon,
        seed=settings.seed,
    )
    temperature = 0.1 * fermi_energy(state.energies, settings.relax_electrons, state.spin_channels) / k_B
    bath = BathSpec(temperature=temperature, omega_d=1e13, upsilon=upsilon)
    packet = PhononPacket(vbar0=2.0, upsilon=upsilon, a=3e-10, k_max=np.pi / 3e-10)

    result = relax(state, bath, packet, settings.relax_steps)
    write_relaxation(output, result)

    checks = [
        _bounded(5, "relaxation", "t_fit_relative_error", abs(result.fit.t_fit / temperature - 1), upper=0.15,
                 detail=f"bath {temperature!r} K, {settings.relax_steps} steps"),
        _bounded(5, "relaxation", "occupancy_at_mu", result.fit.occupancy_at_mu, lower=0.45, upper=0.55),
        _bounded(5, "relaxation", "entropy_trend", result.entropy_trend, lower=-0.05,
                 detail="1 - early/late window mean"),
    ]

    try:
        link = result.busiest_link()
    except ValueError as error:
        checks.append(AcceptanceCheck(number=5, name="relaxation", quantity="detailed_balance_error",
                                      passed=False, detail=str(error)))
        return checks

    checks.append(
        _bounded(5, "relaxation", "detailed_balance_error", link.balance_error, upper=0.10,
                 detail=f"link {link.level}, {link.up_moves} up and {link.down_moves} down moves")
    )
    return checks


def _check_sweep(
    output: RunOutput, settings: ReproduceSettings, number: int, regime: Regime, tolerance: float
) -> list[AcceptanceCheck]:
    template = default_transport_template(regime)
    temperatures = default_temperatures(template.bath, regime)
    result = resistivity_sweep(template, temperatures, max_workers=settings.max_workers)
    write_sweep(output, result)

    name = f"sweep_{regime}"
    expected = result.expected_exponent
    return [
        _bounded(number, name, "slope", result.slope, lower=expected - tolerance, upper=expected + tolerance,
                 detail=f"residual {result.residual!r}"),
        _bounded(number, name, "max_theta0", max(p.theta0 for p in result.points), upper=SMALL_ANGLE_LIMIT),
    ]


def check_high_temperature(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    return _check_sweep(output, settings, 6, Regime.HIGH_T, 0.02)


def check_low_temperature(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    return _check_sweep(output, settings, 7, Regime.LOW_T, 0.05)


def check_theta0_asymptotics(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    radius = np.pi / 3e-10

    output.write_csv(
        "theta0_asymptotics.csv",
        ["theta0_rad", "rate", "rate_quadrature"],
        ([theta, forward_rate(theta, radius), forward_rate_quadrature(theta, radius)] for theta in THETA0_VALUES),
    )

    ratio = forward_rate(2e-3, radius) / forward_rate(1e-3, radius)
    return [_bounded(8, "theta0_asymptotics", "rate_ratio", ratio, lower=15.9, upper=16.1)]


def check_group_velocity(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    runs = group_velocity_convergence(CONVERGENCE_RATIOS, max_workers=settings.max_workers)
    output.write_models_csv("group_velocity.csv", runs)

    run = next(r for r in runs if r.ratio == DEFAULT_RATIO)
    deviations = [r.shape_deviation for r in sorted(runs, key=lambda r: r.ratio, reverse=True)]
    worst_step = max(later / earlier for earlier, later in zip(deviations, deviations[1:]))

    return [
        _bounded(9, "group_velocity", "velocity_error", run.velocity_error, upper=0.01),
        # below 1 when the shape deviation shrinks at every smaller ratio
        _bounded(9, "group_velocity", "shape_deviation_step", worst_step, upper=1.0,
                 detail=f"ratios {sorted(CONVERGENCE_RATIOS, reverse=True)}"),
    ]


def check_uniform_field(output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    run = uniform_field_run()
    output.write_json("uniform_field.json", run)

    return [
        _bounded(10, "uniform_field", "acceleration_error", run.acceleration_error, upper=0.01),
        _bounded(10, "uniform_field", "gauge_discrepancy", run.gauge_discrepancy, upper=1e-6),
    ]


ACCEPTANCE_CHECKS: dict[int, tuple[str, Callable[[RunOutput, ReproduceSettings], list[AcceptanceCheck]]]] = {
    1: ("fourier_a0", check_fourier_a0),
    2: ("transverse_2d", check_transverse_2d),
    3: ("packet_maximum", check_packet_maximum),
    4: ("collision_threshold", check_collision_threshold),
    5: ("relaxation", check_relaxation),
    6: ("sweep_high_t", check_high_temperature),
    7: ("sweep_low_t", check_low_temperature),
    8: ("theta0_asymptotics", check_theta0_asymptotics),
    9: ("group_velocity", check_group_velocity),
    10: ("uniform_field", check_uniform_field),
}


class ReproduceSummary(BaseModel):
    seed: int
    passed: bool
    checks: list[AcceptanceCheck]


@dataclass
class ReproduceResult:
    checks: list[AcceptanceCheck]
    manifest: RunManifest

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> list[AcceptanceCheck]:
        return [check for check in self.checks if not check.passed]

    def get_check(self, name: str, quantity: str) -> AcceptanceCheck:
        """Returns the check row with the given name and quantity"""
        check = next((c for c in self.checks if c.name == name and c.quantity == quantity), None)

        if check is None:
            raise NameError(f"Could not find check {name} with quantity {quantity}")

        return check


def run_check(number: int, output: RunOutput, settings: ReproduceSettings) -> list[AcceptanceCheck]:
    """Runs one acceptance check. A failing run is recorded as a failed check."""
    name, func = ACCEPTANCE_CHECKS[number]
    logger.info(f"Acceptance check {number}: {name}")

    try:
        checks = func(output, settings)
    except (ValueError, NumericalError) as error:
        logger.error(f"Acceptance check {number} ({name}) failed to run: {error}")
        return [AcceptanceCheck(number=number, name=name, quantity="run", passed=False,
                                detail=f"{type(error).__name__}: {error}")]

    for check in checks:
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, f"  {check.quantity} = {check.value!r} ({'passed' if check.passed else 'FAILED'})")

    return checks


def reproduce_all(
    output_dir: Path | str,
    settings: Optional[ReproduceSettings] = None,
    checks: Optional[Iterable[int]] = None,
) -> ReproduceResult:
    """Runs the acceptance checks and writes their results to output_dir.

    Besides the per-experiment tables, summary.csv, summary.json and
    summary.xlsx hold one row per checked quantity. Failures are recorded,
    not raised; see ReproduceResult.passed.

    Args:
        output_dir: The output directory, created if needed
        settings: Seed, workers and the size of the relaxation run
        checks: Numbers of the checks to run, default is all of them

    Returns:
        The checks and the manifest of the run"""

    settings = settings or ReproduceSettings()
    numbers = sorted(ACCEPTANCE_CHECKS) if checks is None else sorted(set(checks))

    unknown = [number for number in numbers if number not in ACCEPTANCE_CHECKS]
    if unknown:
        raise ValueError(f"Unknown acceptance checks {unknown}, choose from {sorted(ACCEPTANCE_CHECKS)}")

    output = RunOutput(Path(output_dir))
    results = []

    for number in numbers:
        results.extend(run_check(number, output, settings))

    summary = ReproduceSummary(seed=settings.seed, passed=all(c.passed for c in results), checks=results)
    output.write_models_csv("summary.csv", results)
    output.write_json("summary.json", summary)
    output.write_summary_workbook("summary.xlsx", results)

    manifest = output.finalize("reproduce-all", settings.seed, config=settings.model_dump())
    return ReproduceResult(checks=results, manifest=manifest)
