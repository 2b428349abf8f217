"""
Writing run results: CSV tables, JSON reports, the summary workbook and the run manifest
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import openpyxl
from openpyxl.workbook.workbook import Workbook
from openpyxl.worksheet.worksheet import Worksheet
from pydantic import BaseModel
from scipy.constants import k as k_B
from scipy.special import expit

from phonontide import __version__
from phonontide.toolbox.ensemble import GEOMETRIES, REASONS, RelaxationResult
from phonontide.toolbox.qwave import PropagationResult
from phonontide.toolbox.transport import SweepResult
from phonontide.utils.file_utils import (get_files_by_extension,
                                         prepare_output_dir)
from phonontide.utils.list_utils import get_list_item_indices

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

SUMMARY_COLS = {
    "number": "Check",
    "name": "Name",
    "quantity": "Quantity",
    "value": "Value",
    "lower": "Lower bound",
    "upper": "Upper bound",
    "passed": "Passed",
    "detail": "Detail",
}


def format_value(value: Any) -> str:
    """CSV text of a value. Floats use repr, so they round-trip exactly and ignore the locale."""
    if value is None:
        return ""

    if isinstance(value, Enum):
        return str(value.value)

    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"

    if isinstance(value, (int, np.integer)):
        return str(int(value))

    if isinstance(value, (float, np.floating)):
        return repr(float(value))

    return str(value)


class AcceptanceCheck(BaseModel):
    """Outcome of one acceptance experiment. value is None when the run failed."""

    number: int
    name: str
    quantity: str
    value: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    passed: bool
    detail: str = ""


class RunManifest(BaseModel):
    """Record of a run.

    Attributes:
        subcommand (str): The subcommand that was run
        config (dict): The resolved configuration, None for reproduce-all without a config
        seed (int): The seed of the stochastic parts
        version (str): phonontide version
        files (list[str]): Every file written, relative to the output directory
        wall_time_s (float): Wall time of the run [s]"""

    subcommand: str
    config: Optional[dict[str, Any]] = None
    seed: int
    version: str = __version__
    files: list[str]
    wall_time_s: float


@dataclass
class SummaryWorkbookExporter:
    """Exports acceptance checks to an Excel workbook

    Attributes:
        checks: The acceptance checks, one row each
        sheet_name: Name of the worksheet. Defaults to "Summary"
        header_row: Row number (1-based) of the column headers. Defaults to 1
        result_cols: Mapping of AcceptanceCheck fields to headers. If None, uses SUMMARY_COLS

    Private Attributes:
        _workbook: Internal openpyxl Workbook object
        _worksheet: Internal openpyxl Worksheet object for the active sheet
        _header_indices: Internal mapping of result column names to column indices"""

    checks: list[AcceptanceCheck]
    sheet_name: str = "Summary"
    header_row: int = 1
    result_cols: Optional[dict[str, str]] = None
    _workbook: Optional[Workbook] = None
    _worksheet: Optional[Worksheet] = None
    _header_indices: Optional[dict[str, int]] = None

    def create_sheet(self):
        """Creates the workbook and writes the header row"""
        if self.result_cols is None:
            self.result_cols = SUMMARY_COLS

        self._workbook = openpyxl.Workbook()
        self._worksheet = self._workbook.active
        self._worksheet.title = self.sheet_name

        for column, header in enumerate(self.result_cols.values(), start=1):
            self._worksheet.cell(row=self.header_row, column=column, value=header)

        header_list = [cell.value for cell in self._worksheet[self.header_row]]
        header_indices = get_list_item_indices(header_list, self.result_cols)

        # Adding 1 to the indices because openpyxl counts columns from 1
        self._header_indices = {key: value + 1 for key, value in header_indices.items()}

    def write_checks(self):
        for check in self.checks:
            result_dict = self.round_result_dict(check.model_dump())
            result_row = {
                self._header_indices[key]: value
                for key, value in result_dict.items()
                if key in self._header_indices
            }
            self._worksheet.append(result_row)

    @staticmethod
    def round_result_dict(result_dict: dict[str, Any]) -> dict[str, Any]:
        """Rounds the floats to 6 significant digits for display"""

        for key, value in result_dict.items():
            if isinstance(value, float) and math.isfinite(value) and value != 0:
                digits = 5 - int(math.floor(math.log10(abs(value))))
                result_dict[key] = round(value, digits)

        return result_dict

    def export_results(self, output_path: Path | str):
        """Exports the checks to the Excel file

        Args:
            output_path: Path to the output Excel file"""

        self.create_sheet()
        self.write_checks()
        self._workbook.save(output_path)
        self._workbook.close()


@dataclass
class RunOutput:
    """Writes the files of a run into a directory and keeps track of them.

    A manifest of a previous run in the same directory is honoured: its
    files are removed before new ones are written, so a reused directory
    only holds the files of the latest run.

    Attributes:
        directory: The output directory, created if needed
        files: Names of the files written so far"""

    directory: Path
    files: list[str] = field(default_factory=list)
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def __post_init__(self):
        self.directory = prepare_output_dir(self.directory)
        self._remove_previous_run()

    def _remove_previous_run(self) -> None:
        manifest_path = self.directory / MANIFEST_NAME
        if not manifest_path.is_file():
            return

        try:
            previous = RunManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
        except ValueError:
            logger.warning(f"Ignoring the unreadable manifest {manifest_path}")
            return

        for name in previous.files + [MANIFEST_NAME]:
            (self.directory / name).unlink(missing_ok=True)

        logger.info(f"Removed {len(previous.files)} files of the previous run in {self.directory}")

    def _register(self, name: str) -> Path:
        if name in self.files or name == MANIFEST_NAME:
            raise ValueError(f"The file '{name}' is written twice in one run")

        self.files.append(name)
        return self.directory / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._register(name)

        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(value) for value in row])

        logger.debug(f"Wrote {path}")
        return path

    def write_models_csv(self, name: str, models: Sequence[BaseModel]) -> Path:
        """One row per model, the field names as header"""
        if not models:
            raise ValueError(f"No rows to write to '{name}'")

        header = list(type(models[0]).model_fields)
        return self.write_csv(name, header, ([getattr(m, key) for key in header] for m in models))

    def write_json(self, name: str, model: BaseModel) -> Path:
        path = self._register(name)
        path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.debug(f"Wrote {path}")
        return path

    def write_summary_workbook(self, name: str, checks: list[AcceptanceCheck]) -> Path:
        path = self._register(name)
        SummaryWorkbookExporter(checks=checks).export_results(path)
        return path

    def finalize(self, subcommand: str, seed: int, config: Optional[dict[str, Any]] = None) -> RunManifest:
        """Writes the manifest and checks the directory against it"""
        manifest = RunManifest(
            subcommand=subcommand,
            config=config,
            seed=seed,
            files=list(self.files),
            wall_time_s=time.perf_counter() - self._started,
        )
        (self.directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")

        check_manifest_complete(self.directory, manifest)
        logger.info(f"{subcommand}: wrote {len(self.files)} files and the manifest to {self.directory}")
        return manifest


def check_manifest_complete(directory: Path | str, manifest: RunManifest) -> list[str]:
    """Checks that every manifest file exists and returns the unlisted files in the directory

    Raises:
        FileNotFoundError: when a listed file is missing"""

    present = {f["name"] for f in get_files_by_extension(directory)}
    listed = set(manifest.files) | {MANIFEST_NAME}

    missing = sorted(listed - present)
    if missing:
        raise FileNotFoundError(f"Files listed in the manifest are missing: {missing}")

    unlisted = sorted(present - listed)
    if unlisted:
        logger.warning(f"The output directory holds files of another origin: {unlisted}")

    return unlisted


def write_relaxation(output: RunOutput, result: RelaxationResult, prefix: str = "relaxation") -> None:
    """Occupancy with the fitted Fermi-Dirac curve, the fit, link statistics, entropy trace and events"""
    fit = result.fit
    velocities = result.final_state.velocities
    fermi_dirac = expit(-(result.energies - fit.mu) / (k_B * fit.t_fit))

    output.write_csv(
        f"{prefix}_occupancy.csv",
        ["level", "velocity_mps", "energy_j", "occupancy", "fermi_dirac"],
        zip(range(len(result.energies)), velocities, result.energies, result.occupancy, fermi_dirac),
    )
    output.write_json(f"{prefix}_fit.json", fit)
    output.write_csv(
        f"{prefix}_links.csv",
        ["level", "up_moves", "down_moves", "occupancy_lower", "occupancy_upper", "ratio", "expected"],
        (
            [l.level, l.up_moves, l.down_moves, l.occupancy_lower, l.occupancy_upper, l.ratio, l.expected]
            for l in result.links
        ),
    )
    edges = result.window_edges
    output.write_csv(
        f"{prefix}_entropy.csv",
        ["window", "start_step", "end_step", "entropy"],
        zip(range(len(result.entropy_trace)), edges[:-1], edges[1:], result.entropy_trace),
    )

    events = result.events
    output.write_csv(
        f"{prefix}_events.csv",
        ["step", "level_in", "level_out", "geometry", "reason"],
        (
            [index, events.level_in[index], events.level_out[index], GEOMETRIES[events.geometry[index]],
             REASONS[events.reason[index]]]
            for index in range(len(events))
        ),
    )


def write_sweep(output: RunOutput, result: SweepResult) -> None:
    name = f"sweep_{result.regime}"
    output.write_models_csv(f"{name}.csv", result.points)
    output.write_json(f"{name}.json", result)


class WavepacketReport(BaseModel):
    """Summary of a wavepacket run. The field-dependent entries are None for free propagation."""

    k0: float
    delta_k: float
    field_strength: float
    duration: float
    group_velocity: float
    fitted_velocity: float
    expected_acceleration: float
    fitted_acceleration: Optional[float] = None
    shape_deviation: Optional[float] = None
    gauge_discrepancy: Optional[float] = None
    norm_drift: float


def write_propagation(output: RunOutput, result: PropagationResult, prefix: str = "wavepacket") -> None:
    """Trajectory (t_s, centroid_m, velocity_mps, width_m, norm) and the final probability density"""
    output.write_csv(
        f"{prefix}_trajectory.csv",
        ["t_s", "centroid_m", "velocity_mps", "width_m", "norm"],
        zip(result.times, result.centroid, result.velocity, result.width, result.norm),
    )
    output.write_csv(f"{prefix}_density.csv", ["x_m", "density_per_m"], zip(result.x, result.density))
