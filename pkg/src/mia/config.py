"""Curation settings resolved from flags, environment, a JSON file and defaults.

Precedence is flag > environment (``MIA_<FIELD>``) > config file > default.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from datetime import date, datetime, timezone
from pathlib import Path

from mia.bev import DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_RHO
from mia.fpv.client import DEFAULT_API_BASE
from mia.fpv.filters import DEFAULT_CAMERA_MODELS, FilterConfig
from mia.fpv.metadata import CameraType

DEFAULT_OSM_BASE = "https://api.openstreetmap.org/api/0.6"
ENV_PREFIX = "MIA_"


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(str(x).strip() for x in text)
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _parse_floats(text) -> tuple:
    return tuple(float(x) for x in _parse_list(text))


def _parse_optional_str(text):
    if text is None:
        return None
    v = str(text).strip()
    return v or None


@dataclass(frozen=True)
class CurationConfig:
    region: str | None = None
    polygon_file: str | None = None
    output_root: str = "mia-data"
    workers: int = 8
    fixtures: str | None = None
    api_base: str = DEFAULT_API_BASE
    osm_base: str = DEFAULT_OSM_BASE
    recency_cutoff: str = "2017-01-01"
    camera_model_filter: bool = True
    camera_allowlist: tuple = tuple(sorted(DEFAULT_CAMERA_MODELS))
    camera_types: tuple = ("perspective", "fisheye")
    max_angle_discrepancy_deg: float = 20.0
    max_loc_discrepancy_m: float = 3.0
    sparsity_radius_m: float = 4.0
    alpha: int = DEFAULT_ALPHA
    delta: int = DEFAULT_DELTA
    rho: float = DEFAULT_RHO
    penetration_px: float = 4.0
    split_ratios: tuple = (0.8, 0.1, 0.1)
    cell_m: float = 500.0
    split_seed: int = 0
    radial_model: str = "theta"
    download_images: bool = True

    def __post_init__(self):
        for name in ("workers", "alpha", "delta"):
            if getattr(self, name) < (0 if name == "delta" else 1):
                raise ConfigError(f"{name} out of range: {getattr(self, name)}")
        for name in ("rho", "max_angle_discrepancy_deg", "max_loc_discrepancy_m",
                     "sparsity_radius_m", "cell_m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v}")
        if not self.penetration_px >= 0:
            raise ConfigError("penetration_px must be non-negative")
        if len(self.split_ratios) != 3 or abs(sum(self.split_ratios) - 1) > 1e-9:
            raise ConfigError(f"split_ratios must be three numbers summing to 1: "
                              f"{self.split_ratios}")
        if self.radial_model not in ("theta", "radial"):
            raise ConfigError(f"unknown radial_model {self.radial_model!r}")
        for t in self.camera_types:
            if CameraType.parse(t) is CameraType.OTHER and t != "other":
                raise ConfigError(f"unknown camera type {t!r}")
        if self.camera_model_filter and not self.camera_allowlist:
            raise ConfigError("camera_allowlist is empty")
        self.recency_cutoff_ms  # validates the date

    @property
    def recency_cutoff_ms(self) -> int:
        try:
            d = date.fromisoformat(self.recency_cutoff)
        except ValueError:
            raise ConfigError(f"recency_cutoff is not an ISO date: "
                              f"{self.recency_cutoff!r}") from None
        return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp() * 1000)

    @property
    def city(self) -> str:
        if self.region:
            return self.region
        if self.polygon_file:
            return Path(self.polygon_file).stem
        if self.fixtures:
            return Path(self.fixtures).name
        raise ConfigError("no region, polygon file or fixture set given")

    def filter_config(self, boundary) -> FilterConfig:
        return FilterConfig(
            boundary=boundary,
            recency_cutoff_ms=self.recency_cutoff_ms,
            camera_allowlist=(frozenset(self.camera_allowlist)
                              if self.camera_model_filter else None),
            max_angle_discrepancy_deg=self.max_angle_discrepancy_deg,
            max_loc_discrepancy_m=self.max_loc_discrepancy_m,
            sparsity_radius_m=self.sparsity_radius_m,
            allowed_camera_types=frozenset(CameraType.parse(t) for t in self.camera_types),
        )

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "str | None": _parse_optional_str,
    "bool": _parse_bool,
    "tuple": None,  # resolved per field below
}
_TUPLE_PARSERS = {"camera_allowlist": _parse_list, "camera_types": _parse_list,
                  "split_ratios": _parse_floats}


def field_parser(name: str):
    f = {f.name: f for f in fields(CurationConfig)}[name]
    if f.type == "tuple":
        return _TUPLE_PARSERS[name]
    return _PARSERS[f.type]


def field_names() -> tuple:
    return tuple(f.name for f in fields(CurationConfig))


def env_name(field_name: str) -> str:
    return ENV_PREFIX + field_name.upper()


def _coerce(name, value, source):
    parse = field_parser(name)
    if value is None:
        return None if parse is _parse_optional_str else value
    if parse is _parse_bool and isinstance(value, bool):
        return value
    try:
        if parse in (int,) and isinstance(value, float) and not value.is_integer():
            raise ValueError("not an integer")
        return parse(value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: bad value for {name}: {value!r} ({exc})") from None


def load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(doc) - set(field_names()))
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {unknown}")
    return doc


def resolve_config(flags=None, env=None, file_values=None) -> CurationConfig:
    """Merge the four layers field by field. ``flags`` values of None mean unset."""
    flags = flags or {}
    env = env or {}
    file_values = file_values or {}
    values = {}
    for name in field_names():
        if flags.get(name) is not None:
            values[name] = _coerce(name, flags[name], "flag")
        elif env_name(name) in env:
            values[name] = _coerce(name, env[env_name(name)], f"${env_name(name)}")
        elif name in file_values:
            values[name] = _coerce(name, file_values[name], "config file")
    try:
        return replace(CurationConfig(), **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
