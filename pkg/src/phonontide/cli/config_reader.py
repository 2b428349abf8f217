"""
Reads run configurations.

The grammar is a flat list of `key = value` lines. Text after `#` is a
comment, blank lines are ignored and every key may occur only once. Values
are given in the units named by the key (a_angstrom in Å, v0_volts in V,
ion_mass_kg in kg, temperature_k in K, omega_d in rad/s, sound_velocity
and fermi_velocity in m/s, k0 in 1/m, field_v_per_m in V/m, duration_s in s).
"""

import logging
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.constants import m_e

from phonontide.toolbox.ensemble import EnsembleState
from phonontide.toolbox.exceptions import ConfigError
from phonontide.toolbox.lattice import BathSpec, LatticeSpec, Regime
from phonontide.toolbox.qwave import (DEFAULT_K0, DEFAULT_RATIO,
                                      DEFAULT_TRAVEL_WIDTHS, WavepacketSpec)
from phonontide.toolbox.transport import TransportSpec
from phonontide.utils.dict_utils import find_missing_keys, find_unknown_keys
from phonontide.utils.list_utils import find_duplicates

logger = logging.getLogger(__name__)

REQUIRED_KEYS = [
    "a_angstrom",
    "n_sites",
    "v0_volts",
    "ion_mass_kg",
    "temperature_k",
    "omega_d",
    "sound_velocity",
]


class RunConfig(BaseModel):
    """A resolved run configuration in config units.

    Attributes:
        a_angstrom (float): Lattice constant [Å]
        n_sites (int): Number of lattice sites
        v0_volts (float): Site potential amplitude [V]
        ion_mass_kg (float): Ion mass [kg]
        temperature_k (float): Bath temperature [K]
        omega_d (float): Debye angular frequency [rad/s]
        sound_velocity (float): Velocity of sound υ [m/s]
        fermi_velocity (float): Fermi velocity [m/s]
        electron_mass_kg (float): Electron mass [kg]
        seed (int): Seed of the Monte Carlo stream
        levels (int): Number of ensemble speed levels
        electrons (int): Number of ensemble electrons
        spin_channels (int): Spin channels per level
        steps (int): Number of Monte Carlo steps
        k0 (float): Wavepacket center wavenumber [1/m]
        delta_k_ratio (float): Wavepacket spectral width over k0
        field_v_per_m (float): Uniform field for the wavepacket [V/m]
        duration_s (Optional[float]): Wavepacket propagation time [s], default from the packet width
        grid_points (int): Wavepacket grid points"""

    model_config = ConfigDict(extra="forbid")

    a_angstrom: float = Field(gt=0)
    n_sites: int = Field(ge=2)
    v0_volts: float = Field(gt=0)
    ion_mass_kg: float = Field(gt=0)
    temperature_k: float = Field(ge=0)
    omega_d: float = Field(gt=0)
    sound_velocity: float = Field(gt=0)
    fermi_velocity: float = Field(default=1.5e6, gt=0)
    electron_mass_kg: float = Field(default=m_e, gt=0)
    seed: int = Field(default=2024, ge=0)
    levels: int = Field(default=200, ge=2)
    electrons: int = Field(default=50, ge=1)
    spin_channels: int = Field(default=2, ge=1, le=2)
    steps: int = Field(default=1_000_000, ge=20)
    k0: float = Field(default=DEFAULT_K0, gt=0)
    delta_k_ratio: float = Field(default=DEFAULT_RATIO, gt=0, lt=1)
    field_v_per_m: float = 0.0
    duration_s: Optional[float] = Field(default=None, gt=0)
    grid_points: int = Field(default=4096, ge=16)

    def lattice(self) -> LatticeSpec:
        return LatticeSpec.from_angstrom(
            self.a_angstrom, n=self.n_sites, v0=self.v0_volts, ion_mass=self.ion_mass_kg
        )

    def bath(self) -> BathSpec:
        return BathSpec(
            temperature=self.temperature_k, omega_d=self.omega_d, upsilon=self.sound_velocity
        )

    def regime(self) -> Regime:
        """HIGH_T at or above the Debye temperature, LOW_T below it"""
        return Regime.HIGH_T if self.temperature_k >= self.bath().theta_d else Regime.LOW_T

    def transport(self, regime: Regime) -> TransportSpec:
        bath = self.bath()

        # The sweeps replace the temperature, the template only has to be valid
        if regime == Regime.LOW_T and bath.temperature >= bath.theta_d:
            bath = bath.model_copy(update={"temperature": 0.0})

        return TransportSpec(
            v_f=self.fermi_velocity,
            electron_mass=self.electron_mass_kg,
            lattice=self.lattice(),
            bath=bath,
            regime=regime,
        )

    def ensemble(self) -> EnsembleState:
        return EnsembleState.create(
            n_levels=self.levels,
            n_electrons=self.electrons,
            upsilon=self.sound_velocity,
            mass=self.electron_mass_kg,
            spin_channels=self.spin_channels,
            seed=self.seed,
        )

    def wavepacket(self) -> WavepacketSpec:
        return WavepacketSpec.from_ratio(
            self.delta_k_ratio, self.k0, grid_points=self.grid_points, mass=self.electron_mass_kg
        )

    def wavepacket_duration(self) -> float:
        if self.duration_s is not None:
            return self.duration_s

        spec = self.wavepacket()
        return DEFAULT_TRAVEL_WIDTHS * spec.sigma_x / spec.group_velocity

    def override(self, **updates: Any) -> "RunConfig":
        """A validated copy with the given fields replaced. None values are skipped.

        Raises:
            ConfigError: for an unknown field or a value violating its constraint"""

        updates = {key: value for key, value in updates.items() if value is not None}
        if not updates:
            return self

        for key in find_unknown_keys(updates, RunConfig.model_fields):
            raise ConfigError(f"Unknown key '{key}'", key=key)

        values = {**self.model_dump(), **updates}
        try:
            return RunConfig.model_validate(values)
        except ValidationError as error:
            raise _config_error(error, values) from error

    def to_config_text(self) -> str:
        """The configuration in the config grammar, one key per line in field order"""
        lines = []

        for key, value in self.model_dump().items():
            if value is None:
                continue
            lines.append(f"{key} = {value!r}")

        return "\n".join(lines) + "\n"


def _split_lines(text: str) -> list[dict[str, Any]]:
    """Splits config text into {'key', 'value', 'line_number'} entries"""
    entries = []

    for line_number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue

        if "=" not in content:
            raise ConfigError(f"Expected 'key = value', got '{content}'", line_number=line_number)

        key, value = (part.strip() for part in content.split("=", 1))
        if not key or not value:
            raise ConfigError(f"Expected 'key = value', got '{content}'", key=key or None, line_number=line_number)

        entries.append({"key": key, "value": value, "line_number": line_number})

    return entries


def _config_error(
    error: ValidationError, values: dict[str, Any], lines: Optional[dict[str, int]] = None
) -> ConfigError:
    details = error.errors()[0]
    key = str(details["loc"][0]) if details["loc"] else None
    line_number = (lines or {}).get(key)
    return ConfigError(f"{key} = {values.get(key)}: {details['msg']}", key=key, line_number=line_number)


def parse_config_text(text: str) -> RunConfig:
    """Parses and validates config text.

    Raises:
        ConfigError: for a malformed line, a duplicate or unknown key, missing
            required keys or a value violating its constraint"""

    entries = _split_lines(text)
    lines = {}

    for key in find_duplicates([entry["key"] for entry in entries]):
        line_number = [entry["line_number"] for entry in entries if entry["key"] == key][1]
        raise ConfigError(f"Duplicate key '{key}'", key=key, line_number=line_number)

    for entry in entries:
        lines[entry["key"]] = entry["line_number"]

    values = {entry["key"]: entry["value"] for entry in entries}

    for key in find_unknown_keys(values, RunConfig.model_fields):
        raise ConfigError(f"Unknown key '{key}'", key=key, line_number=lines[key])

    missing = find_missing_keys(values, REQUIRED_KEYS)
    if missing:
        raise ConfigError(f"Missing required keys: {', '.join(missing)}")

    try:
        config = RunConfig.model_validate(values)
    except ValidationError as error:
        raise _config_error(error, values, lines) from error

    logger.debug(f"Parsed {len(entries)} config keys")
    return config


def parse_config(path: str | Path) -> RunConfig:
    """Reads and validates the config file at path"""
    path = Path(path)

    if not path.is_file():
        raise ConfigError(f"Config file '{path}' does not exist")

    return parse_config_text(path.read_text(encoding="utf-8"))
