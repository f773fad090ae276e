"""Surrogate safety measures and traffic statistics.

TTC = D_LF / (V_F - V_L) for a follower faster than its leader, DRAC =
(V_F - V_L)^2 / (2 D_LF), and TIT integrates the TTC shortfall below the
threshold over all followers for a window after the first crash.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .config import SsmConfig


@dataclass(frozen=True)
class ConflictSample:
    time: float
    follower: int
    leader: int
    d_lf: float  # leader rear bumper to follower front bumper
    v_f: float
    v_l: float
    lane: int = 0


def ttc(sample: ConflictSample) -> Optional[float]:
    """Time to collision; None when the follower is not closing in or already overlaps."""
    closing = sample.v_f - sample.v_l
    if closing <= 0 or sample.d_lf < 0:
        return None
    return sample.d_lf / closing


def drac(sample: ConflictSample) -> float:
    closing = sample.v_f - sample.v_l
    if closing <= 0:
        return 0.0
    if sample.d_lf <= 0:
        return math.inf
    return closing * closing / (2.0 * sample.d_lf)


def in_window(t: float, anchor: float, window: float, dt: float) -> bool:
    eps = 0.5 * dt
    return anchor - eps <= t < anchor + window - eps


def tit(samples: Iterable[ConflictSample], config: SsmConfig, anchor: Optional[float],
        dt: float = 0.1, horizon: Optional[float] = None) -> float:
    """Rectangle-rule TIT over ``[anchor, anchor + tit_window)``."""
    if anchor is None:
        return 0.0
    if horizon is not None and anchor + config.tit_window > horizon + 1e-9:
        warnings.warn("TIT window extends past the horizon; truncated", RuntimeWarning)
    terms = []
    for s in samples:
        if not in_window(s.time, anchor, config.tit_window, dt):
            continue
        t = ttc(s)
        if t is not None and t <= config.ttc_star:
            terms.append((config.ttc_star - t) * dt)
    return math.fsum(terms)


def count_critical(samples: Iterable[ConflictSample], config: SsmConfig,
                   dt: float = 0.1) -> tuple:
    """Count critical episodes per indicator.

    A follower's consecutive critical ticks form one episode. TTC is critical
    below ``ttc_star``; DRAC is critical above ``drac_star``.
    """
    last_ttc: dict = {}
    last_drac: dict = {}
    n_ttc = n_drac = 0
    for s in sorted(samples, key=lambda s: (s.time, s.follower)):
        t = ttc(s)
        if t is not None and t < config.ttc_star:
            prev = last_ttc.get(s.follower)
            if prev is None or abs(s.time - dt - prev) > 0.5 * dt:
                n_ttc += 1
            last_ttc[s.follower] = s.time
        if drac(s) > config.drac_star:
            prev = last_drac.get(s.follower)
            if prev is None or abs(s.time - dt - prev) > 0.5 * dt:
                n_drac += 1
            last_drac[s.follower] = s.time
    return n_ttc, n_drac


@dataclass
class SsmReport:
    tit: float
    crash_count: int
    flow: float
    critical_ttc_events: int
    critical_drac_events: int
    min_ttc: float  # nan when no TTC was ever defined
    tit_anchor: Optional[float]
    min_ttc_series: np.ndarray = field(repr=False)
    max_drac_series: np.ndarray = field(repr=False)
    speed_sum: np.ndarray = field(repr=False)
    speed_count: np.ndarray = field(repr=False)
    space_time_sum: np.ndarray = field(repr=False)
    space_time_count: np.ndarray = field(repr=False)
    dt_bin: float = 10.0
    dx_bin: float = 100.0

    @property
    def mean_speed_series(self) -> np.ndarray:
        """Mean speed of all on-road vehicles per time bin (NaN for an empty network)."""
        return _ratio(self.speed_sum, self.speed_count)

    @property
    def space_time_field(self) -> np.ndarray:
        """Mean speed per [time bin, space bin]; NaN marks empty cells."""
        return _ratio(self.space_time_sum, self.space_time_count)


def _ratio(s, c):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(c > 0, s / np.maximum(c, 1), np.nan)


class SsmAccumulator:
    """Per-tick conflict sampling inside the run.

    Works on the values exactly as they are written to the trajectory file
    (rounded to 6 decimals) so an offline recomputation sees identical inputs.
    """

    def __init__(self, cfg: SsmConfig, n_ticks: int, capacity: int, dt: float,
                 horizon: float, road_length: float, st_lane: int):
        self.cfg = cfg
        self.dt = dt
        self.horizon = horizon
        self.road_length = road_length
        self.st_lane = st_lane
        self.min_ttc_series = np.full(n_ticks, np.nan)
        self.max_drac_series = np.full(n_ticks, np.nan)
        self.prev_ttc = np.zeros(capacity, dtype=bool)
        self.prev_drac = np.zeros(capacity, dtype=bool)
        self.ttc_events = 0
        self.drac_events = 0
        self.anchor: Optional[float] = None
        self.tit_terms: list = []
        self.ticks_per_tbin = cfg.dt_bin / dt
        self.n_tbins = int(math.ceil(horizon / cfg.dt_bin - 1e-9))
        self.n_xbins = int(math.ceil(road_length / cfg.dx_bin - 1e-9))
        self.st_sum = np.zeros((self.n_tbins, self.n_xbins))
        self.st_cnt = np.zeros((self.n_tbins, self.n_xbins), dtype=np.int64)
        self.sp_sum = np.zeros(self.n_tbins)
        self.sp_cnt = np.zeros(self.n_tbins, dtype=np.int64)

    def update(self, tick: int, time: float, lanes, pos_r, speed_r, length, lane_of):
        """Sample every follower-leader pair after the tick; ``pos_r``/``speed_r`` are rounded."""
        cfg = self.cfg
        fol, led = [], []
        for ids in lanes:
            if len(ids) > 1:
                fol.append(ids[1:])
                led.append(ids[:-1])
        tb = min(int(tick // self.ticks_per_tbin), self.n_tbins - 1)
        order = np.concatenate(lanes) if lanes else np.zeros(0, dtype=np.int64)
        if order.size:
            self.sp_sum[tb] += speed_r[order].sum()
            self.sp_cnt[tb] += order.size
            sel = order[lane_of[order] == self.st_lane]
            x = pos_r[sel]
            inside = (x >= 0) & (x < self.road_length)
            xb = (x[inside] // self.cfg.dx_bin).astype(np.int64)
            self.st_sum[tb] += np.bincount(xb, weights=speed_r[sel][inside],
                                           minlength=self.n_xbins)
            self.st_cnt[tb] += np.bincount(xb, minlength=self.n_xbins)
        if not fol:
            self.prev_ttc[:] = False
            self.prev_drac[:] = False
            return
        f = np.concatenate(fol)
        l = np.concatenate(led)
        d = (pos_r[l] - length[l]) - pos_r[f]
        closing = speed_r[f] - speed_r[l]
        near = d <= cfg.max_gap
        defined = near & (closing > 0) & (d >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ttc_v = np.where(defined, d / np.where(defined, closing, 1.0), np.inf)
            drac_v = np.where(defined, closing * closing / (2.0 * d), 0.0)
        if defined.any():
            self.min_ttc_series[tick] = ttc_v[defined].min()
            self.max_drac_series[tick] = drac_v[defined].max()
        crit_t = ttc_v < cfg.ttc_star
        crit_d = drac_v > cfg.drac_star
        self.ttc_events += int(np.count_nonzero(crit_t & ~self.prev_ttc[f]))
        self.drac_events += int(np.count_nonzero(crit_d & ~self.prev_drac[f]))
        self.prev_ttc[:] = False
        self.prev_drac[:] = False
        self.prev_ttc[f[crit_t]] = True
        self.prev_drac[f[crit_d]] = True
        if self.anchor is not None and in_window(time, self.anchor, cfg.tit_window, self.dt):
            m = defined & (ttc_v <= cfg.ttc_star)
            if m.any():
                self.tit_terms.extend(((cfg.ttc_star - ttc_v[m]) * self.dt).tolist())

    def report(self, crash_count: int, exit_count: int) -> SsmReport:
        if self.anchor is not None and self.anchor + self.cfg.tit_window > self.horizon + 1e-9:
            warnings.warn("TIT window extends past the horizon; truncated", RuntimeWarning)
        defined = ~np.isnan(self.min_ttc_series)
        return SsmReport(
            tit=math.fsum(self.tit_terms),
            crash_count=crash_count,
            flow=exit_count * 3600.0 / self.horizon,
            critical_ttc_events=self.ttc_events,
            critical_drac_events=self.drac_events,
            min_ttc=float(self.min_ttc_series[defined].min()) if defined.any() else math.nan,
            tit_anchor=self.anchor,
            min_ttc_series=self.min_ttc_series,
            max_drac_series=self.max_drac_series,
            speed_sum=self.sp_sum,
            speed_count=self.sp_cnt,
            space_time_sum=self.st_sum,
            space_time_count=self.st_cnt,
            dt_bin=self.cfg.dt_bin,
            dx_bin=self.cfg.dx_bin,
        )


def compute_traffic_stats(run_result, dt_bin: Optional[float] = None,
                          dx_bin: Optional[float] = None):
    """Flow, binned mean network speed and the space-time speed field of a run.

    With bin sizes other than the run's own, the fields are rebuilt from the
    stored per-bin sums when the new bins are whole multiples of the old ones.
    """
    rep = run_result.report
    flow = run_result.exit_count * 3600.0 / run_result.config.horizon
    if dt_bin is None and dx_bin is None:
        return flow, rep.mean_speed_series, rep.space_time_field
    kt = int(round((dt_bin or rep.dt_bin) / rep.dt_bin))
    kx = int(round((dx_bin or rep.dx_bin) / rep.dx_bin))
    if kt < 1 or kx < 1 or abs(kt * rep.dt_bin - (dt_bin or rep.dt_bin)) > 1e-9 \
            or abs(kx * rep.dx_bin - (dx_bin or rep.dx_bin)) > 1e-9:
        raise ValueError("bin sizes must be whole multiples of the run's bins")

    def coarsen(a, k, axis):
        n = a.shape[axis]
        m = -(-n // k) * k
        pad = [(0, 0)] * a.ndim
        pad[axis] = (0, m - n)
        a = np.pad(a, pad)
        shape = list(a.shape)
        shape[axis:axis + 1] = [m // k, k]
        return a.reshape(shape).sum(axis=axis + 1)

    st = _ratio(coarsen(coarsen(rep.space_time_sum, kt, 0), kx, 1),
                coarsen(coarsen(rep.space_time_count, kt, 0), kx, 1))
    ms = _ratio(coarsen(rep.speed_sum, kt, 0), coarsen(rep.speed_count, kt, 0))
    return flow, ms, st
