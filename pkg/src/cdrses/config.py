"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .activity import FilterCriteria
from .calendars import DEFAULT_HOLIDAYS, HolidayCalendar
from .spatial import Projection


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    cdr: str = "cdr.csv"
    cells: str = "cells.csv"
    listings: str = "listings.csv"
    admin: str = "admin.geojson"
    boundary: str = "boundary.geojson"
    outdir: str = "out"
    census_district: str = ""
    census_age: str = ""
    start: dt.date = dt.date(2017, 4, 1)
    days: int = 30
    holidays: tuple = DEFAULT_HOLIDAYS
    tz_offset_hours: float = 2.0
    center_lon: float = 19.0402
    center_lat: float = 47.4979
    bbox_half_width_deg: float = 2.0
    bbox_half_height_deg: float = 1.5
    min_days: int = 20
    min_weekday_mean: float = 40.0
    min_weekend_mean: float = 20.0
    max_daily_mean: float = 1000.0
    merge_eps_m: float = 100.0
    min_listings: int = 1
    rg_k: int = 2
    strata_q: int = 10
    diversity_k: int = 2
    directed: bool = True
    quantile_rule: str = "linear"
    stationary_km: float = 1.0
    threads: int = 1

    def __post_init__(self):
        for name in ("days", "rg_k", "strata_q", "diversity_k", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("merge_eps_m", "stationary_km", "min_weekday_mean", "min_weekend_mean", "max_daily_mean"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.min_listings < 0 or self.min_days < 0:
            raise ConfigError("min_listings and min_days must be non-negative")

    @property
    def calendar(self) -> HolidayCalendar:
        return HolidayCalendar(self.start, self.days, frozenset(self.holidays), tz_offset_hours=self.tz_offset_hours)

    @property
    def projection(self) -> Projection:
        return Projection(self.center_lon, self.center_lat, self.bbox_half_width_deg, self.bbox_half_height_deg)

    @property
    def criteria(self) -> FilterCriteria:
        return FilterCriteria(self.min_days, self.min_weekday_mean, self.min_weekend_mean, self.max_daily_mean)

    @property
    def out(self) -> Path:
        return Path(self.outdir)

    def with_overrides(self, **values) -> "RunConfig":
        known = {f.name: f for f in fields(self)}
        clean = {}
        for k, v in values.items():
            if v is None:
                continue
            if k not in known:
                raise ConfigError(f"unknown setting {k!r}")
            clean[k] = _coerce(known[k], v)
        return replace(self, **clean)

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "holidays":
                v = ",".join(d.isoformat() for d in sorted(v))
            elif isinstance(v, dt.date):
                v = v.isoformat()
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(f, value):
    if not isinstance(value, str):
        return tuple(value) if f.name == "holidays" else value
    text = value.strip()
    try:
        if f.name == "holidays":
            return tuple(sorted(dt.date.fromisoformat(t.strip()) for t in text.split(",") if t.strip()))
        if f.name == "start":
            return dt.date.fromisoformat(text)
        if f.type in ("bool", bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if f.type in ("int", int):
            return int(text)
        if f.type in ("float", float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {f.name}: {value!r}") from exc
    return text


def load_config(path=None, **overrides) -> RunConfig:
    """Read a config file (paths inside resolve relative to it) and apply overrides."""
    values = {}
    base = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        base = path.parent
        for n, line in enumerate(path.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
    cfg = RunConfig().with_overrides(**values)
    if base is not None:
        path_keys = ("cdr", "cells", "listings", "admin", "boundary", "outdir", "census_district", "census_age")
        resolved = {k: str(base / getattr(cfg, k)) for k in path_keys
                    if k in values and getattr(cfg, k) and not Path(getattr(cfg, k)).is_absolute()}
        cfg = replace(cfg, **resolved)
    return cfg.with_overrides(**overrides)
