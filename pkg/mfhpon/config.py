"""
Run configuration for mfhpon.

A run is described by a flat dict of settings. DEFAULT_CONFIG holds the
Dublin split-6 evaluation setup (50G TWDM-EPON, 32 ONUs, six MFH ONUs
of one mobile operator); INI files and JSON sidecars override it key by
key and the result is frozen into a RunConfig.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from mfhpon.dwba import Scheme, Sizing
from mfhpon.engine import BITS_PER_BYTE, PS_PER_SECOND, SimTime, byte_time_ps, seconds_to_ps, us_to_ps
from mfhpon.splits import SPLIT_OPTIONS

logger = logging.getLogger(__name__)

PRESET_NAME = "tr38801-split6-dublin.preset"
PRESET_PATH = Path(__file__).parent / "presets" / PRESET_NAME

SCENARIOS = ("18h", "24h", "custom")
B_FACTOR_RANGE = (0.5, 2.0)
PHASES = ("aligned", "staggered")

# Default configuration values
DEFAULT_CONFIG: dict[str, Any] = {
    "scheme": "proposed",
    "scenario": "24h",
    "split_option": "6",
    "sizing": "limited",
    "prediction_error": 0.0,
    "pin_excess_pools": False,
    "schemes": [s.value for s in Scheme],
    "n_onus": 32,
    "n_mfh_onus": 6,
    "wavelengths": 2,
    "line_rate_bps": 25_000_000_000,
    "ingress_rate_bps": 100_000_000_000,
    "mfh_distances_m": [1200.0, 2500.0, 3800.0, 2100.0, 3300.0, 4700.0],
    "conventional_distance_min_m": 500.0,
    "conventional_distance_max_m": 5000.0,
    "t_max_cycle_us": 250.0,
    "guard_time_us": 0.624,
    "burst_period_us": 250.0,
    "wsi_lead_us": 4000.0,
    "mfh_phase": "aligned",
    "residential_peak_mbps": [4170.0, 4445.0, 3927.0],
    "commercial_peak_mbps": [4287.0, 4041.0, 4440.0],
    "offpeak_residential_18h": 0.381,
    "offpeak_commercial_24h": 0.081,
    "conventional_load_fraction": 0.85,
    "b_factor": 1.0,
    "b_factor_grid": [0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.15, 1.20],
    "duration_s": 5.0,
    "warmup_s": 1.0,
    "replications": 3,
    "base_seed": 1,
    "workers": 1,
    "output_dir": "results",
    "trace_file": None,
    "check_invariants": True,
    "log_level": "INFO",
    "log_file": None,
}

# Type mapping for parsing
TYPE_MAP: dict[str, str] = {
    "scheme": "str",
    "scenario": "str",
    "split_option": "str",
    "sizing": "str",
    "prediction_error": "float",
    "pin_excess_pools": "bool",
    "schemes": "strlist",
    "n_onus": "int",
    "n_mfh_onus": "int",
    "wavelengths": "int",
    "line_rate_bps": "int",
    "ingress_rate_bps": "int",
    "mfh_distances_m": "floatlist",
    "conventional_distance_min_m": "float",
    "conventional_distance_max_m": "float",
    "t_max_cycle_us": "float",
    "guard_time_us": "float",
    "burst_period_us": "float",
    "wsi_lead_us": "float",
    "mfh_phase": "str",
    "residential_peak_mbps": "floatlist",
    "commercial_peak_mbps": "floatlist",
    "offpeak_residential_18h": "float",
    "offpeak_commercial_24h": "float",
    "conventional_load_fraction": "float",
    "b_factor": "float",
    "b_factor_grid": "floatlist",
    "duration_s": "float",
    "warmup_s": "float",
    "replications": "int",
    "base_seed": "int",
    "workers": "int",
    "output_dir": "str",
    "trace_file": "str",
    "check_invariants": "bool",
    "log_level": "str",
    "log_file": "str",
}

# INI section of every key
SECTIONS: dict[str, tuple[str, ...]] = {
    "scenario": ("scheme", "scenario", "split_option", "sizing", "prediction_error", "pin_excess_pools", "schemes"),
    "pon": (
        "n_onus",
        "n_mfh_onus",
        "wavelengths",
        "line_rate_bps",
        "ingress_rate_bps",
        "mfh_distances_m",
        "conventional_distance_min_m",
        "conventional_distance_max_m",
    ),
    "timing": ("t_max_cycle_us", "guard_time_us", "burst_period_us", "wsi_lead_us", "mfh_phase"),
    "traffic": (
        "residential_peak_mbps",
        "commercial_peak_mbps",
        "offpeak_residential_18h",
        "offpeak_commercial_24h",
        "conventional_load_fraction",
    ),
    "sla": ("b_factor", "b_factor_grid"),
    "run": (
        "duration_s",
        "warmup_s",
        "replications",
        "base_seed",
        "workers",
        "output_dir",
        "trace_file",
        "check_invariants",
    ),
    "logging": ("log_level", "log_file"),
}

# Keys that may be left empty
NULLABLE = frozenset({"trace_file", "log_file"})

# Keys whose INI option name differs from the flat key
_INI_NAMES = {"log_level": "level", "log_file": "file"}


class ConfigError(Exception):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    """The configuration file could not be read or a value has the wrong type."""


class ConfigValidationError(ConfigError):
    """A configuration value is out of range or inconsistent."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _serialize_value(value: Any, value_type: str) -> str:
    """Serialize a value for an INI file."""
    if value is None:
        return ""
    if value_type == "bool":
        return "true" if value else "false"
    if value_type in ("floatlist", "strlist"):
        return ", ".join(_format_number(v) if value_type == "floatlist" else str(v) for v in value)
    if value_type == "float":
        return _format_number(value)
    return str(value)


def _format_number(value: float) -> str:
    return repr(float(value))


def _deserialize_value(value: str, value_type: str) -> Any:
    """Parse an INI string into the key's type."""
    value = value.strip()
    if not value:
        return [] if value_type in ("floatlist", "strlist") else None
    if value_type == "bool":
        lowered = value.lower()
        if lowered not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {value!r}")
        return lowered in ("true", "1", "yes", "on")
    if value_type == "int":
        try:
            return int(value.replace("_", ""))
        except ValueError:
            number = float(value)
        if not number.is_integer():
            raise ValueError(f"not an integer: {value!r}") from None
        return int(number)
    if value_type == "float":
        return float(value)
    if value_type == "floatlist":
        return [float(v) for v in value.split(",") if v.strip()]
    if value_type == "strlist":
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def _coerce(key: str, value: Any) -> Any:
    """Bring a JSON or override value to the key's declared type."""
    if isinstance(value, str):
        return _deserialize_value(value, TYPE_MAP[key])
    if value is None:
        return None
    value_type = TYPE_MAP[key]
    if value_type == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"not an integer: {value!r}")
        return int(value)
    if value_type == "float":
        return float(value)
    if value_type == "bool":
        return bool(value)
    if value_type == "floatlist":
        return [float(v) for v in value]
    if value_type == "strlist":
        return [str(v) for v in value]
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one run or sweep."""

    scheme: str
    scenario: str
    split_option: str
    sizing: str
    prediction_error: float
    pin_excess_pools: bool
    schemes: tuple[str, ...]
    n_onus: int
    n_mfh_onus: int
    wavelengths: int
    line_rate_bps: int
    ingress_rate_bps: int
    mfh_distances_m: tuple[float, ...]
    conventional_distance_min_m: float
    conventional_distance_max_m: float
    t_max_cycle_us: float
    guard_time_us: float
    burst_period_us: float
    wsi_lead_us: float
    mfh_phase: str
    residential_peak_mbps: tuple[float, ...]
    commercial_peak_mbps: tuple[float, ...]
    offpeak_residential_18h: float
    offpeak_commercial_24h: float
    conventional_load_fraction: float
    b_factor: float
    b_factor_grid: tuple[float, ...]
    duration_s: float
    warmup_s: float
    replications: int
    base_seed: int
    workers: int
    output_dir: str
    trace_file: str | None
    check_invariants: bool
    log_level: str
    log_file: str | None

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> RunConfig:
        merged = {**DEFAULT_CONFIG, **values}
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in merged.items() if k in TYPE_MAP}
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **{k: tuple(v) if isinstance(v, list) else v for k, v in changes.items()})

    @property
    def duration_ps(self) -> SimTime:
        return seconds_to_ps(self.duration_s)

    @property
    def warmup_ps(self) -> SimTime:
        """Warm-up actually applied: never more than half the run."""
        return min(seconds_to_ps(self.warmup_s), self.duration_ps // 2)

    @property
    def t_max_ps(self) -> SimTime:
        return us_to_ps(self.t_max_cycle_us)

    @property
    def guard_ps(self) -> SimTime:
        return us_to_ps(self.guard_time_us)

    @property
    def burst_period_ps(self) -> SimTime:
        return us_to_ps(self.burst_period_us)

    @property
    def wsi_lead_ps(self) -> SimTime:
        return us_to_ps(self.wsi_lead_us)

    @property
    def mfh_peak_bps(self) -> tuple[int, ...]:
        return tuple(round(p * 1e6) for p in self.residential_peak_mbps + self.commercial_peak_mbps)

    @property
    def mfh_guaranteed_bps(self) -> tuple[int, ...]:
        """B_k of every MFH ONU: the peak offered load scaled by b_factor."""
        return tuple(round(p * self.b_factor) for p in self.mfh_peak_bps)

    @property
    def n_conventional(self) -> int:
        return self.n_onus - self.n_mfh_onus

    @property
    def conventional_guaranteed_bps(self) -> int:
        """Capacity left after the MFH guarantees, shared equally by the conventional ONUs."""
        if self.n_conventional <= 0:
            return 0
        remaining = self.wavelengths * self.line_rate_bps - sum(self.mfh_guaranteed_bps)
        return max(0, remaining // self.n_conventional)


def default_config() -> RunConfig:
    return RunConfig.from_dict({})


def _read_ini(path: Path) -> dict[str, Any]:
    parser = configparser.RawConfigParser()
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigParseError(f"Error parsing {path}: {e}") from e
    except OSError as e:
        raise ConfigParseError(f"Cannot read {path}: {e}") from e

    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigParseError(f"{path}: unknown section [{section}]")
        names = {_INI_NAMES.get(key, key): key for key in SECTIONS[section]}
        for option, raw in parser.items(section):
            key = names.get(option)
            if key is None:
                raise ConfigParseError(f"{path}: unknown option {option!r} in [{section}]")
            try:
                value = _deserialize_value(raw, TYPE_MAP[key])
            except ValueError as e:
                raise ConfigParseError(f"{section}.{option}: {e}") from e
            if value is not None or key in NULLABLE:
                values[key] = value
    return values


def _read_json(path: Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"Error parsing {path}: {e}") from e
    except OSError as e:
        raise ConfigParseError(f"Cannot read {path}: {e}") from e
    # A results sidecar nests the resolved config under "config".
    if isinstance(document, dict) and isinstance(document.get("config"), dict):
        document = document["config"]
    if not isinstance(document, dict):
        raise ConfigParseError(f"{path}: expected a JSON object")
    values: dict[str, Any] = {}
    for key, raw in document.items():
        if key not in TYPE_MAP:
            raise ConfigParseError(f"{path}: unknown key {key!r}")
        try:
            value = _coerce(key, raw)
        except (TypeError, ValueError) as e:
            raise ConfigParseError(f"{key}: {e}") from e
        if value is not None or key in NULLABLE:
            values[key] = value
    return values


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Build a validated RunConfig from defaults, an optional file and overrides.

    Args:
        path: INI file (any suffix) or JSON sidecar (.json); None uses the defaults.
        overrides: Flat key -> value pairs applied last (command-line flags).

    Returns:
        The resolved configuration.

    Raises:
        ConfigParseError: If the file cannot be read or a value has the wrong type.
        ConfigValidationError: For the first invalid field.
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path).expanduser()
        values.update(_read_json(path) if path.suffix.lower() == ".json" else _read_ini(path))
    for key, raw in (overrides or {}).items():
        if key not in TYPE_MAP:
            raise ConfigParseError(f"Unknown setting {key!r}")
        if raw is None:
            continue
        try:
            values[key] = _coerce(key, raw)
        except (TypeError, ValueError) as e:
            raise ConfigParseError(f"{key}: {e}") from e

    cfg = RunConfig.from_dict(values)
    problems = validate_config(cfg)
    if problems:
        field, message = problems[0]
        raise ConfigValidationError(field, message)
    return cfg


def validate_config(cfg: RunConfig) -> list[tuple[str, str]]:
    """Every problem with cfg as (field, message); empty when valid."""
    problems: list[tuple[str, str]] = []
    schemes = {s.value for s in Scheme}

    def check(ok: bool, field: str, message: str) -> None:
        if not ok:
            problems.append((field, message))

    check(cfg.scheme in schemes, "scheme", f"must be one of {sorted(schemes)}")
    check(all(s in schemes for s in cfg.schemes), "schemes", f"entries must be among {sorted(schemes)}")
    check(cfg.scenario in SCENARIOS, "scenario", f"must be one of {list(SCENARIOS)}")
    check(cfg.split_option in SPLIT_OPTIONS, "split_option", f"must be one of {list(SPLIT_OPTIONS)}")
    check(cfg.sizing in {s.value for s in Sizing}, "sizing", "must be fixed, limited or gated")
    check(
        cfg.scheme != Scheme.PROPOSED.value or cfg.sizing == Sizing.LIMITED.value,
        "sizing",
        "the proposed scheme uses limited sizing",
    )
    check(cfg.prediction_error >= -1.0, "prediction_error", "must be >= -1")
    lo, hi = B_FACTOR_RANGE
    check(lo <= cfg.b_factor <= hi, "b_factor", f"must be within [{lo}, {hi}]")
    check(
        len(cfg.b_factor_grid) > 0 and all(lo <= b <= hi for b in cfg.b_factor_grid),
        "b_factor_grid",
        f"must be non-empty with values within [{lo}, {hi}]",
    )
    check(cfg.duration_s > 0, "duration_s", "must be positive")
    check(cfg.warmup_s >= 0, "warmup_s", "must be non-negative")
    check(cfg.replications >= 1, "replications", "must be at least 1")
    check(cfg.workers >= 1, "workers", "must be at least 1")
    check(cfg.t_max_cycle_us > 0, "t_max_cycle_us", "must be positive")
    check(cfg.guard_time_us >= 0, "guard_time_us", "must be non-negative")
    check(cfg.burst_period_us > 0, "burst_period_us", "must be positive")
    check(cfg.wsi_lead_us >= 0, "wsi_lead_us", "must be non-negative")
    check(cfg.mfh_phase in PHASES, "mfh_phase", f"must be one of {list(PHASES)}")
    check(cfg.wavelengths >= 1, "wavelengths", "must be at least 1")
    check(cfg.n_onus >= 1, "n_onus", "must be at least 1")
    check(0 <= cfg.n_mfh_onus <= cfg.n_onus, "n_mfh_onus", "must be between 0 and n_onus")
    n_peaks = len(cfg.residential_peak_mbps) + len(cfg.commercial_peak_mbps)
    check(n_peaks == cfg.n_mfh_onus, "n_mfh_onus", f"must match the {n_peaks} configured MFH peak loads")
    check(len(cfg.mfh_distances_m) == cfg.n_mfh_onus, "mfh_distances_m", "needs one distance per MFH ONU")
    check(all(d >= 0 for d in cfg.mfh_distances_m), "mfh_distances_m", "must be non-negative")
    check(
        0 <= cfg.conventional_distance_min_m <= cfg.conventional_distance_max_m,
        "conventional_distance_min_m",
        "must be non-negative and not above conventional_distance_max_m",
    )
    check(
        all(p > 0 for p in cfg.residential_peak_mbps + cfg.commercial_peak_mbps),
        "residential_peak_mbps",
        "peak loads must be positive",
    )
    check(0 <= cfg.offpeak_residential_18h <= 1, "offpeak_residential_18h", "must be within [0, 1]")
    check(0 <= cfg.offpeak_commercial_24h <= 1, "offpeak_commercial_24h", "must be within [0, 1]")
    check(0 <= cfg.conventional_load_fraction <= 1, "conventional_load_fraction", "must be within [0, 1]")
    for field, rate in (("line_rate_bps", cfg.line_rate_bps), ("ingress_rate_bps", cfg.ingress_rate_bps)):
        try:
            byte_time_ps(rate)
        except ValueError as e:
            problems.append((field, str(e)))
    if cfg.n_mfh_onus and n_peaks == cfg.n_mfh_onus:
        capacity = cfg.wavelengths * cfg.line_rate_bps
        guaranteed = sum(cfg.mfh_guaranteed_bps)
        check(
            guaranteed <= capacity,
            "b_factor",
            f"MFH guarantees of {guaranteed / 1e9:.2f} Gbit/s exceed the {capacity / 1e9:.0f} Gbit/s PON capacity",
        )
        if guaranteed <= capacity and cfg.n_conventional > 0 and cfg.t_max_cycle_us > 0:
            check(
                cfg.conventional_guaranteed_bps * cfg.t_max_ps >= BITS_PER_BYTE * PS_PER_SECOND,
                "b_factor",
                "MFH guarantees leave the conventional ONUs less than one byte per cycle",
            )
    return problems


def export_to_ini(cfg: RunConfig) -> str:
    """
    Export a resolved configuration as an INI document that load_config reads back.

    Returns:
        INI-formatted configuration string
    """
    values = cfg.to_dict()
    lines = [
        "# =============================================================================",
        "# mfhpon run configuration",
        "# =============================================================================",
        "# Times in the [timing] section are microseconds, rates are bit/s unless the",
        "# key says otherwise. Empty values mean \"not set\".",
        "# =============================================================================",
    ]
    for section, keys in SECTIONS.items():
        lines.extend(["", f"[{section}]"])
        for key in keys:
            lines.append(f"{_INI_NAMES.get(key, key)} = {_serialize_value(values[key], TYPE_MAP[key])}".rstrip())
    return "\n".join(lines) + "\n"
