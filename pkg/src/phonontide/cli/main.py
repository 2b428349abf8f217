"""
Command line entry point of phonontide.

Exit codes: 0 success, 2 configuration or input error, 3 acceptance bound
violated, 4 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from phonontide import __version__
from phonontide.cli.config_reader import RunConfig, parse_config
from phonontide.cli.reproduce import (ACCEPTANCE_CHECKS, ReproduceSettings,
                                      reproduce_all)
from phonontide.cli.result_writer import (RunOutput, WavepacketReport,
                                          write_propagation, write_relaxation,
                                          write_sweep)
from phonontide.toolbox.collision import (ElectronState, Geometry,
                                          barrier_energy, collide_oblique,
                                          collision_sweep)
from phonontide.toolbox.ensemble import relax
from phonontide.toolbox.exceptions import (AcceptanceError, ConfigError,
                                           NumericalError)
from phonontide.toolbox.lattice import (Regime, build_potential,
                                        packet_envelope, packet_from_modes)
from phonontide.toolbox.qwave import (build_packet, gauge_vs_direct_discrepancy,
                                      propagate_free, propagate_uniform_field,
                                      shape_deviation)
from phonontide.toolbox.transport import (default_temperatures,
                                          resistivity_sweep)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3
EXIT_NUMERICAL = 4

VELOCITY_FACTORS = np.linspace(0.25, 4.0, 16)  # electron speeds in units of the threshold speed
UPSILON_FACTORS = (0.5, 1.0, 2.0)  # packet speeds in units of the sound velocity
OBLIQUE_ANGLES = np.linspace(0, np.pi / 2, 19)
REGIMES = {"high": Regime.HIGH_T, "low": Regime.LOW_T}


def _require_config(args: argparse.Namespace) -> RunConfig:
    if args.config is None:
        raise ConfigError(f"The {args.command} subcommand requires --config")

    return parse_config(args.config).override(seed=args.seed)


def run_potential(args: argparse.Namespace) -> None:
    config = _require_config(args)
    lattice = config.lattice()
    packet = packet_from_modes(lattice, config.bath(), config.regime())

    output = RunOutput(Path(args.output_dir))
    x, u = build_potential(lattice)
    output.write_csv("potential.csv", ["x_meters", "potential_volts"], zip(x, u))

    x_packet = np.linspace(-20, 20, 2001) * packet.length_scale
    output.write_csv("envelope.csv", ["x_meters", "envelope_volts"], zip(x_packet, packet_envelope(packet, x_packet)))
    output.write_json("packet.json", packet)

    output.finalize(args.command, config.seed, config.model_dump())
    print(f"Packet amplitude {packet.vbar0:.6g} V, barrier {packet.barrier_height:.6g} V ({packet.regime})")


def run_collide(args: argparse.Namespace) -> None:
    config = _require_config(args)
    packet = packet_from_modes(config.lattice(), config.bath(), config.regime())
    mass = config.electron_mass_kg

    threshold = np.sqrt(2 * barrier_energy(packet) / mass)
    if threshold == 0:
        threshold = config.sound_velocity

    v_values = VELOCITY_FACTORS * threshold
    upsilon_values = np.array(UPSILON_FACTORS) * config.sound_velocity

    output = RunOutput(Path(args.output_dir))

    for geometry in Geometry:
        records = collision_sweep(v_values, upsilon_values, packet, geometry, mass=mass)
        output.write_models_csv(f"collisions_{geometry}.csv", records)

    rows = []
    for theta in OBLIQUE_ANGLES:
        outcome = collide_oblique(ElectronState(v=config.fermi_velocity, theta=theta, mass=mass), packet)
        rows.append([theta, outcome.kind, outcome.v_out, outcome.v_parallel, outcome.v_perpendicular,
                     outcome.forward_change_factor])

    output.write_csv(
        "collisions_oblique.csv",
        ["theta_rad", "kind", "v_forward_mps", "v_parallel_mps", "v_perpendicular_mps", "forward_change_factor"],
        rows,
    )

    output.finalize(args.command, config.seed, config.model_dump())
    print(f"Threshold speed {threshold:.6g} m/s for a barrier of {packet.barrier_height:.6g} V")


def run_relax(args: argparse.Namespace) -> None:
    config = _require_config(args)
    config = config.override(
        levels=args.levels, electrons=args.electrons, steps=args.steps, temperature_k=args.temperature
    )
    bath = config.bath()
    packet = packet_from_modes(config.lattice(), bath, config.regime())

    result = relax(config.ensemble(), bath, packet, config.steps)

    output = RunOutput(Path(args.output_dir))
    write_relaxation(output, result)
    output.finalize(args.command, config.seed, config.model_dump())

    fit = result.fit
    print(f"T_fit = {fit.t_fit:.4g} K (bath {bath.temperature:.4g} K), f(mu) = {fit.occupancy_at_mu:.4f}")


def run_sweep(args: argparse.Namespace) -> None:
    config = _require_config(args)
    output = RunOutput(Path(args.output_dir))

    regimes = [REGIMES[args.regime]] if args.regime else list(Regime)

    for regime in regimes:
        template = config.transport(regime)
        defaults = default_temperatures(template.bath, regime, points=args.points)
        t_min = defaults[0] if args.tmin is None else args.tmin
        t_max = defaults[-1] if args.tmax is None else args.tmax
        temperatures = np.geomspace(t_min, t_max, args.points)
        result = resistivity_sweep(template, temperatures, max_workers=args.workers)
        write_sweep(output, result)
        print(f"{regime}: slope {result.slope:.5f} (expected {result.expected_exponent:g})")

    output.finalize(args.command, config.seed, config.model_dump())


def run_wavepacket(args: argparse.Namespace) -> None:
    config = _require_config(args)
    config = config.override(k0=args.k0, field_v_per_m=args.field, duration_s=args.duration)
    if args.delta_k is not None:
        config = config.override(delta_k_ratio=args.delta_k / config.k0)

    spec = config.wavepacket()
    packet = build_packet(spec)
    duration = config.wavepacket_duration()
    field_strength = config.field_v_per_m

    if field_strength == 0:
        result = propagate_free(packet, duration)
        extra = {"shape_deviation": shape_deviation(result)}
    else:
        result = propagate_uniform_field(packet, field_strength, duration)
        extra = {
            "fitted_acceleration": result.fitted_acceleration(),
            "gauge_discrepancy": gauge_vs_direct_discrepancy(packet, field_strength, duration),
        }

    report = WavepacketReport(
        k0=spec.k0,
        delta_k=spec.delta_k,
        field_strength=field_strength,
        duration=duration,
        group_velocity=spec.group_velocity,
        fitted_velocity=result.fitted_velocity(),
        expected_acceleration=-spec.charge * field_strength / spec.mass,
        norm_drift=result.norm_drift,
        **extra,
    )

    output = RunOutput(Path(args.output_dir))
    write_propagation(output, result)
    output.write_json("wavepacket.json", report)
    output.finalize(args.command, config.seed, config.model_dump())

    print(f"Group velocity {spec.group_velocity:.6g} m/s, fitted {report.fitted_velocity:.6g} m/s")


def run_reproduce_all(args: argparse.Namespace) -> None:
    settings = ReproduceSettings(max_workers=args.workers)

    if args.config is not None:
        config = parse_config(args.config)
        settings = settings.model_copy(
            update={
                "seed": config.seed,
                "relax_levels": config.levels,
                "relax_electrons": config.electrons,
                "relax_steps": config.steps,
            }
        )

    if args.seed is not None:
        settings = settings.model_copy(update={"seed": args.seed})

    result = reproduce_all(args.output_dir, settings=settings, checks=args.checks)

    for check in result.checks:
        status = "ok" if check.passed else "FAILED"
        print(f"{check.number:>2} {check.name:<20} {check.quantity:<28} {check.value!r:<24} {status}")

    if not result.passed:
        raise AcceptanceError(f"{len(result.failed)} acceptance check(s) failed, see {args.output_dir}/summary.csv")


def run_check_config(args: argparse.Namespace) -> None:
    config = _require_config(args)
    print(config.to_config_text(), end="")
    print(f"# regime: {config.regime()}")


COMMANDS = {
    "potential": (run_potential, "Lattice potential and the phonon packet envelope"),
    "collide": (run_collide, "Electron-packet collisions over a velocity grid"),
    "relax": (run_relax, "Monte Carlo relaxation of the electron ensemble"),
    "sweep": (run_sweep, "Forward scattering rate sweeps in both temperature regimes"),
    "wavepacket": (run_wavepacket, "Quantum wavepacket propagation, free or in a uniform field"),
    "reproduce-all": (run_reproduce_all, "Run every acceptance check"),
    "check-config": (run_check_config, "Validate a config and print it with all defaults"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phonontide", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Path of the key = value config file")
    common.add_argument("--output-dir", type=Path, default=Path("output"), help="Output directory")
    common.add_argument("--seed", type=int, default=None, help="Overrides the seed of the config")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, (func, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.set_defaults(func=func)

        if name in ("sweep", "reproduce-all"):
            sub.add_argument("--workers", type=int, default=1, help="Number of worker processes")

        if name == "sweep":
            sub.add_argument("--regime", choices=sorted(REGIMES), default=None, help="Sweep only this regime")
            sub.add_argument("--tmin", type=float, default=None, help="Lowest sweep temperature [K]")
            sub.add_argument("--tmax", type=float, default=None, help="Highest sweep temperature [K]")
            sub.add_argument("--points", type=int, default=10, help="Number of sweep temperatures")

        if name == "relax":
            sub.add_argument("--levels", type=int, default=None, help="Number of speed levels")
            sub.add_argument("--electrons", type=int, default=None, help="Number of electrons")
            sub.add_argument("--steps", type=int, default=None, help="Number of Monte Carlo steps")
            sub.add_argument("--temperature", type=float, default=None, help="Bath temperature [K]")

        if name == "wavepacket":
            sub.add_argument("--k0", type=float, default=None, help="Center wavenumber [1/m]")
            sub.add_argument("--delta-k", type=float, default=None, help="Spectral width [1/m]")
            sub.add_argument("--field", type=float, default=None, help="Uniform field [V/m]")
            sub.add_argument("--duration", type=float, default=None, help="Propagation time [s]")

        if name == "reproduce-all":
            sub.add_argument(
                "--checks", type=int, nargs="+", choices=sorted(ACCEPTANCE_CHECKS), default=None,
                help="Run only these acceptance checks",
            )

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        args.func(args)
    except AcceptanceError as error:
        logger.error(str(error))
        return EXIT_ACCEPTANCE
    except NumericalError as error:
        logger.error(f"Numerical failure: {error}")
        return EXIT_NUMERICAL
    except ValueError as error:
        logger.error(f"Invalid input: {error}")
        return EXIT_CONFIG

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
