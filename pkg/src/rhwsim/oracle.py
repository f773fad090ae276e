"""Brute-force surrogate safety recomputation from a trajectory CSV.

Deliberately shares nothing with the in-run accumulator except the scalar
TTC/DRAC/TIT definitions: rows are streamed tick by tick with the csv module,
grouped by lane, sorted by position and paired follower-to-leader one by one.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .config import SsmConfig
from .ssm import ConflictSample, count_critical, drac, in_window, tit, ttc


@dataclass
class OracleReport:
    tit: float
    tit_anchor: Optional[float]
    crashed_vehicles: int
    min_ttc: float
    critical_ttc_events: int
    critical_drac_events: int
    n_samples: int


def iter_ticks(path, veh_length: float = 5.0, max_gap: float = 250.0):
    """Yield ``(time, samples, crashed_ids)`` per tick, streaming the file.

    Rows of one tick must be contiguous and ticks in increasing time order,
    which is how trajectories are written; anything else raises ValueError.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        col = {name: i for i, name in enumerate(header)}
        it, iv, il, ip, isp, ic = (col[k] for k in (
            "time_s", "veh_id", "lane", "pos_m", "speed_mps", "crashed"))
        cur = None
        lanes = defaultdict(list)
        crashed = []
        for row in reader:
            t = float(row[it])
            if t != cur:
                if cur is not None:
                    if t < cur:
                        raise ValueError(f"trajectory not in time order at t={t}")
                    yield cur, _pair(cur, lanes, veh_length, max_gap), crashed
                cur, lanes, crashed = t, defaultdict(list), []
            vid = int(row[iv])
            lanes[int(row[il])].append((float(row[ip]), vid, float(row[isp])))
            if row[ic] == "1":
                crashed.append(vid)
        if cur is not None:
            yield cur, _pair(cur, lanes, veh_length, max_gap), crashed


def _pair(t, lanes, veh_length, max_gap):
    samples = []
    for lane in sorted(lanes):
        vs = sorted(lanes[lane], key=lambda r: -r[0])
        for (pl, lid, vl), (pf, fid, vf) in zip(vs, vs[1:]):
            d = (pl - veh_length) - pf
            if d > max_gap:
                continue
            samples.append(ConflictSample(t, fid, lid, d, vf, vl, lane))
    return samples


def recompute(path, ttc_star: float = 1.5, drac_star: float = 3.35, window: float = 15.0,
              crash_time: Optional[float] = None, veh_length: float = 5.0,
              max_gap: float = 250.0, dt: float = 0.1) -> OracleReport:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trajectory file not found: {path}")
    cfg = SsmConfig(ttc_star=ttc_star, drac_star=drac_star, tit_window=window, max_gap=max_gap)
    anchor = crash_time
    crashed = set()
    in_tit = []     # samples inside the TIT window
    critical = []   # samples critical on either indicator, enough for episode counts
    min_ttc = math.inf
    n = 0
    for t, samples, crashed_ids in iter_ticks(path, veh_length, max_gap):
        crashed.update(crashed_ids)
        if anchor is None and crashed_ids:
            anchor = t
        n += len(samples)
        for s in samples:
            x = ttc(s)
            if x is not None:
                min_ttc = min(min_ttc, x)
            if (x is not None and x < ttc_star) or drac(s) > drac_star:
                critical.append(s)
            if anchor is not None and in_window(t, anchor, window, dt):
                in_tit.append(s)
    n_ttc, n_drac = count_critical(critical, cfg, dt)
    return OracleReport(
        tit=tit(in_tit, cfg, anchor, dt),
        tit_anchor=anchor,
        crashed_vehicles=len(crashed),
        min_ttc=min_ttc if math.isfinite(min_ttc) else math.nan,
        critical_ttc_events=n_ttc,
        critical_drac_events=n_drac,
        n_samples=n,
    )
