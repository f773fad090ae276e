"""Configuration types, the INI-style config format, and validation.

Every key has a default, so an empty file reproduces the reference freeway
setup: 5 km two-lane stretch, 110 km/h limit, 3000 veh/h, 0.1 s step, 1 h.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Union


class ConfigError(ValueError):
    """Invalid or malformed configuration. The message names the offending key."""


@dataclass(frozen=True)
class ClippedNormal:
    mean: float
    std: float
    lo: float
    hi: float

    def __str__(self):
        return f"normal({self.mean!r},{self.std!r})[{self.lo!r},{self.hi!r}]"


Dist = Union[float, ClippedNormal]

_NORMAL_RE = re.compile(
    r"^normal\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)\s*;?\s*\[\s*([^,\s]+)\s*,\s*([^\]\s]+)\s*\]$"
)


def parse_dist(text: str, key: str) -> Dist:
    text = text.strip()
    m = _NORMAL_RE.match(text)
    if m:
        try:
            mean, std, lo, hi = (float(g) for g in m.groups())
        except ValueError:
            raise ConfigError(f"{key}: malformed distribution {text!r}") from None
        return ClippedNormal(mean, std, lo, hi)
    try:
        return float(text)
    except ValueError:
        raise ConfigError(
            f"{key}: expected a number or normal(mean,std)[min,max], got {text!r}"
        ) from None


@dataclass(frozen=True)
class RoadNetwork:
    length: float = 5000.0
    lane_count: int = 2
    speed_limit: float = 30.56
    hazard_lane_index: int = 0


@dataclass(frozen=True)
class DemandConfig:
    rate: float = 3000.0  # veh/h
    step_length: float = 0.1
    horizon: float = 3600.0
    seed: int = 0
    penetration: float = 0.0
    equip_quota: bool = False  # exact share of equipped vehicles instead of per-vehicle draws


@dataclass(frozen=True)
class DriverDistributions:
    sigma: Dist = ClippedNormal(0.2, 0.5, 0.0, 1.0)
    decel: Dist = ClippedNormal(3.5, 1.0, 2.0, 4.5)
    accel: Dist = ClippedNormal(2.0, 1.0, 1.0, 3.5)
    speed_factor: Dist = ClippedNormal(1.1, 0.2, 0.8, 1.2)
    tau: Dist = 2.0
    emergency_decel: Dist = 4.5
    lc_assertive: Dist = 1.3
    action_step_length: Dist = 0.9
    max_speed: Dist = 30.5
    length: float = 5.0
    min_gap: float = 2.5
    speed_gain_threshold: float = 1.0
    lc_brake_weight: float = 1.0
    lc_blocked_speed: float = 1.0


@dataclass(frozen=True)
class TcsConfig:
    enabled: bool = True
    rhw_range: float = 500.0
    reaction_time: float = 0.9
    safety_factor: float = 2.0
    decel_ability: float = 4.5
    scr_factor: float = 1.0
    decel_alarm_threshold: float = 4.5
    cam_silence_ticks: int = 3
    ground_truth_detection: bool = True
    eebl_formula: str = "stopping"  # or "literal"
    # EEBL gap-control template
    gap_time_headway: float = 4.0
    gap_space_headway: float = 2.0
    gap_duration: float = -1.0
    gap_change_rate: float = 0.5
    gap_max_decel: float = 1.5


@dataclass(frozen=True)
class HazardPlan:
    enabled: bool = True
    trigger_position: float = 4000.0
    depart_time: float = 300.0
    # the doomed vehicle's own driver; defaults are the population means
    sigma: float = 0.2
    accel: float = 2.0
    decel: float = 3.5
    speed_factor: float = 1.1


@dataclass(frozen=True)
class SsmConfig:
    ttc_star: float = 1.5
    drac_star: float = 3.35
    tit_window: float = 15.0
    max_gap: float = 250.0
    dt_bin: float = 10.0
    dx_bin: float = 100.0
    spacetime_lane: int = -1  # -1 selects the hazard lane


@dataclass(frozen=True)
class OutputConfig:
    trajectory: bool = False
    traj_start: float = 0.0
    traj_end: float = -1.0  # -1 means to the horizon


@dataclass(frozen=True)
class SimConfig:
    road: RoadNetwork = field(default_factory=RoadNetwork)
    demand: DemandConfig = field(default_factory=DemandConfig)
    drivers: DriverDistributions = field(default_factory=DriverDistributions)
    tcs: TcsConfig = field(default_factory=TcsConfig)
    hazard: HazardPlan = field(default_factory=HazardPlan)
    ssm: SsmConfig = field(default_factory=SsmConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def step_length(self) -> float:
        return self.demand.step_length

    @property
    def horizon(self) -> float:
        return self.demand.horizon

    @property
    def seed(self) -> int:
        return self.demand.seed

    @property
    def n_ticks(self) -> int:
        return int(round(self.demand.horizon / self.demand.step_length))

    def with_overrides(self, **sections) -> "SimConfig":
        """Copy with sections replaced, given as dicts (``road={"length": 3000}``) or instances."""
        kw = {}
        for name, values in sections.items():
            if isinstance(values, dict):
                values = replace(getattr(self, name), **values)
            kw[name] = values
        return validate(replace(self, **kw))


SECTIONS = ("road", "demand", "drivers", "tcs", "hazard", "ssm", "output")


def _check(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def _check_dist(d: Dist, key: str, positive: bool = True):
    if isinstance(d, ClippedNormal):
        _check(d.lo < d.hi, key, "clip range needs min < max")
        _check(d.std >= 0, key, "std must be >= 0")
        _check(all(map(math.isfinite, (d.mean, d.std, d.lo, d.hi))), key, "non-finite value")
        if positive:
            _check(d.lo > 0, key, "clip range must be positive")
    else:
        _check(math.isfinite(d), key, "non-finite value")
        if positive:
            _check(d > 0, key, "must be positive")


def validate(cfg: SimConfig) -> SimConfig:
    r, dm, dr, t, h, s, o = (cfg.road, cfg.demand, cfg.drivers, cfg.tcs,
                             cfg.hazard, cfg.ssm, cfg.output)
    _check(r.length > 0, "road.length", "must be > 0")
    _check(r.lane_count >= 2, "road.lane_count", "must be >= 2")
    _check(r.speed_limit > 0, "road.speed_limit", "must be > 0")
    _check(0 <= r.hazard_lane_index < r.lane_count, "road.hazard_lane_index",
           "must be a valid lane index")

    _check(dm.step_length > 0, "demand.step_length", "must be > 0")
    ticks = dm.horizon / dm.step_length
    _check(dm.horizon > 0 and abs(ticks - round(ticks)) < 1e-6, "demand.horizon",
           "must be a positive multiple of step_length")
    _check(dm.rate >= 0, "demand.rate", "must be >= 0")
    _check(0.0 <= dm.penetration <= 1.0, "demand.penetration", "must lie in [0, 1]")

    for name in ("decel", "accel", "tau", "emergency_decel", "lc_assertive",
                 "action_step_length", "speed_factor"):
        _check_dist(getattr(dr, name), f"drivers.{name}")
    _check_dist(dr.sigma, "drivers.sigma", positive=False)
    _check_dist(dr.max_speed, "drivers.max_speed", positive=False)
    sig = dr.sigma
    lo, hi = (sig.lo, sig.hi) if isinstance(sig, ClippedNormal) else (sig, sig)
    _check(0.0 <= lo and hi <= 1.0, "drivers.sigma", "must lie in [0, 1]")
    _check(dr.length > 0, "drivers.length", "must be > 0")
    _check(dr.min_gap >= 0, "drivers.min_gap", "must be >= 0")
    _check(dr.speed_gain_threshold >= 0, "drivers.speed_gain_threshold", "must be >= 0")
    _check(dr.lc_brake_weight >= 0, "drivers.lc_brake_weight", "must be >= 0")
    _check(dr.lc_blocked_speed >= 0, "drivers.lc_blocked_speed", "must be >= 0")
    for name in ("action_step_length",):
        d = getattr(dr, name)
        vals = [d] if not isinstance(d, ClippedNormal) else []
        for v in vals:
            k = v / dm.step_length
            _check(abs(k - round(k)) < 1e-6, f"drivers.{name}",
                   "must be a multiple of step_length")

    _check(t.rhw_range > 0, "tcs.rhw_range", "must be > 0")
    _check(t.reaction_time >= 0, "tcs.reaction_time", "must be >= 0")
    _check(t.safety_factor > 0, "tcs.safety_factor", "must be > 0")
    _check(t.decel_ability > 0, "tcs.decel_ability", "must be > 0")
    _check(0 < t.scr_factor <= 1, "tcs.scr_factor", "must lie in (0, 1]")
    _check(t.decel_alarm_threshold > 0, "tcs.decel_alarm_threshold", "must be > 0")
    _check(t.cam_silence_ticks >= 1, "tcs.cam_silence_ticks", "must be >= 1")
    _check(t.eebl_formula in ("stopping", "literal"), "tcs.eebl_formula",
           "must be 'stopping' or 'literal'")
    _check(t.gap_time_headway > 0, "tcs.gap_time_headway", "must be > 0")
    _check(t.gap_space_headway >= 0, "tcs.gap_space_headway", "must be >= 0")
    _check(t.gap_duration == -1 or t.gap_duration > 0, "tcs.gap_duration",
           "must be -1 (unbounded) or > 0")
    _check(t.gap_change_rate > 0, "tcs.gap_change_rate", "must be > 0")
    _check(t.gap_max_decel > 0, "tcs.gap_max_decel", "must be > 0")
    if t.enabled:
        from .tcs import eebl_distance
        _check(eebl_distance(t, r.speed_limit) <= t.rhw_range, "tcs.eebl_formula",
               "EEBL distance exceeds rhw_range; zones would not nest")

    _check(0 < h.trigger_position < r.length, "hazard.trigger_position",
           "must lie strictly inside the road")
    _check(h.depart_time >= 0, "hazard.depart_time", "must be >= 0")
    _check(0 <= h.sigma <= 1, "hazard.sigma", "must lie in [0, 1]")
    _check(h.accel > 0 and h.decel > 0 and h.speed_factor > 0, "hazard",
           "accel, decel and speed_factor must be > 0")

    for name in ("ttc_star", "drac_star", "tit_window", "max_gap", "dt_bin", "dx_bin"):
        _check(getattr(s, name) > 0, f"ssm.{name}", "must be > 0")
    _check(s.spacetime_lane == -1 or 0 <= s.spacetime_lane < r.lane_count,
           "ssm.spacetime_lane", "must be -1 or a valid lane index")

    _check(o.traj_start >= 0, "output.traj_start", "must be >= 0")
    _check(o.traj_end == -1 or o.traj_end > o.traj_start, "output.traj_end",
           "must be -1 or > traj_start")
    return cfg


# -- text format -------------------------------------------------------------

def _convert(raw: str, ftype, key: str):
    raw = raw.strip()
    if ftype is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected bool, got {raw!r}")
    if ftype is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected int, got {raw!r}") from None
    if ftype is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected float, got {raw!r}") from None
    if ftype is str:
        return raw
    if ftype == "Dist":
        return parse_dist(raw, key)
    raise AssertionError(ftype)


_SECTION_TYPES = {
    "road": RoadNetwork, "demand": DemandConfig, "drivers": DriverDistributions,
    "tcs": TcsConfig, "hazard": HazardPlan, "ssm": SsmConfig, "output": OutputConfig,
}


def _field_type(f: dataclasses.Field):
    t = f.type if not isinstance(f.type, str) else f.type
    return {"float": float, "int": int, "bool": bool, "str": str, "Dist": "Dist"}[t]


def parse_config_text(text: str, source: str = "<string>") -> SimConfig:
    parser = configparser.ConfigParser(
        strict=True, interpolation=None, inline_comment_prefixes=("#",),
        comment_prefixes=("#",), empty_lines_in_values=False,
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"{e.section}.{e.option}: duplicate key") from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"[{e.section}]: duplicate section") from None
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None

    sections = {}
    for sec in parser.sections():
        if sec not in _SECTION_TYPES:
            raise ConfigError(f"[{sec}]: unknown section")
        cls = _SECTION_TYPES[sec]
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in parser.items(sec):
            if key not in known:
                raise ConfigError(f"{sec}.{key}: unknown key")
            values[key] = _convert(raw, _field_type(known[key]), f"{sec}.{key}")
        sections[sec] = cls(**values)
    return validate(SimConfig(**sections))


def parse_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from None
    return parse_config_text(text, source=str(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: SimConfig) -> str:
    lines = []
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        lines.append(f"[{sec}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
