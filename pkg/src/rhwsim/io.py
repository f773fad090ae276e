"""CSV outputs: trajectory, events, summary, space-time field and time series.

Floats are written with 6 decimals, every file has a header row and every
row ends with a newline.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .tcs import ZONE_LABELS, Zone

TRAJ_COLUMNS = ("time_s", "veh_id", "lane", "pos_m", "speed_mps", "accel_mps2", "zone",
                "equipped", "crashed")
EVENT_COLUMNS = ("time_s", "kind", "veh_id", "other_id", "lane", "pos_m", "detail")
SUMMARY_COLUMNS = ("scenario_id", "penetration", "scr_factor", "seed", "tit", "crashes",
                   "flow_vph", "min_ttc_s", "ttc_events", "drac_events")
SPACETIME_COLUMNS = ("t_bin_s", "x_bin_m", "mean_speed_mps", "veh_count")

_ZONE_NAMES = [ZONE_LABELS[Zone(i)] for i in range(4)]


class OutputError(OSError):
    pass


def f6(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror}") from None


class TrajectoryWriter:
    """Streams one row per on-road vehicle per tick inside the configured window."""

    def __init__(self, path, config, flush_rows: int = 200_000):
        self.path = Path(path)
        self.start = config.output.traj_start
        self.end = config.output.traj_end if config.output.traj_end >= 0 else math.inf
        self.fh = _open(self.path)
        self.fh.write(",".join(TRAJ_COLUMNS) + "\n")
        self.buf: list = []
        self.rows = 0
        self.flush_rows = flush_rows

    def write_tick(self, world, pos_r, speed_r):
        t = world.stamp
        if t < self.start - 1e-9 or t > self.end + 1e-9:
            return
        f = world.fleet
        ids = world.order()
        if ids.size == 0:
            return
        ts = f6(t)
        acc = np.round(f.acc[ids], 6)
        rows = [
            f"{ts},{i},{ln},{p:.6f},{v:.6f},{a:.6f},{_ZONE_NAMES[z]},{int(e)},{int(c)}\n"
            for i, ln, p, v, a, z, e, c in zip(
                ids.tolist(), f.lane[ids].tolist(), pos_r[ids].tolist(),
                speed_r[ids].tolist(), acc.tolist(), f.zone[ids].tolist(),
                f.equipped[ids].tolist(), f.crashed[ids].tolist())
        ]
        self.buf.extend(rows)
        self.rows += len(rows)
        if len(self.buf) >= self.flush_rows:
            self.flush()

    def flush(self):
        if self.buf:
            self.fh.write("".join(self.buf))
            self.buf.clear()

    def close(self):
        self.flush()
        self.fh.close()


def write_events(path, events):
    with _open(Path(path)) as fh:
        fh.write(",".join(EVENT_COLUMNS) + "\n")
        for e in events:
            fh.write(f"{e.time:.6f},{e.kind},{e.veh_id},{e.other_id},{e.lane},"
                     f"{f6(e.pos)},{e.detail}\n")


def summary_row(result, scenario_id: int = 0) -> dict:
    cfg = result.config
    rep = result.report
    return {
        "scenario_id": scenario_id,
        "penetration": cfg.demand.penetration,
        "scr_factor": cfg.tcs.scr_factor,
        "seed": cfg.demand.seed,
        "tit": rep.tit,
        "crashes": rep.crash_count,
        "flow_vph": rep.flow,
        "min_ttc_s": rep.min_ttc,
        "ttc_events": rep.critical_ttc_events,
        "drac_events": rep.critical_drac_events,
    }


def format_row(row: dict, columns=SUMMARY_COLUMNS) -> str:
    out = []
    for c in columns:
        v = row.get(c, "")
        if isinstance(v, (bool, np.bool_)):
            out.append(str(int(v)))
        elif isinstance(v, (int, np.integer)):
            out.append(str(int(v)))
        elif isinstance(v, (float, np.floating)):
            out.append(f6(float(v)))
        else:
            out.append(str(v))
    return ",".join(out) + "\n"


def write_summary(path, rows, columns=SUMMARY_COLUMNS):
    with _open(Path(path)) as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(format_row(r, columns))


def write_spacetime(path, report):
    st = report.space_time_field
    cnt = report.space_time_count
    with _open(Path(path)) as fh:
        fh.write(",".join(SPACETIME_COLUMNS) + "\n")
        for ti, xi in zip(*np.nonzero(cnt)):
            fh.write(f"{ti * report.dt_bin:.6f},{xi * report.dx_bin:.6f},"
                     f"{st[ti, xi]:.6f},{int(cnt[ti, xi])}\n")


def write_series(path, result):
    """Per-tick extreme TTC/DRAC plus the binned mean network speed."""
    rep = result.report
    dt = result.config.step_length
    with _open(Path(path)) as fh:
        fh.write("time_s,min_ttc_s,max_drac_mps2\n")
        for k in np.flatnonzero(~np.isnan(rep.min_ttc_series)):
            fh.write(f"{(k + 1) * dt:.6f},{rep.min_ttc_series[k]:.6f},"
                     f"{f6(float(rep.max_drac_series[k]))}\n")


def write_speed(path, report):
    ms = report.mean_speed_series
    with _open(Path(path)) as fh:
        fh.write("t_bin_s,mean_speed_mps\n")
        for i, v in enumerate(ms):
            fh.write(f"{i * report.dt_bin:.6f},{f6(float(v))}\n")


def emit_outputs(result, out_dir, scenario_id: int = 0) -> dict:
    """Write events, summary, space-time, conflict and speed files for one run.

    The trajectory file, when requested, is streamed during the run itself.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out}: {e.strerror}") from None
    files = {
        "events": out / "events.csv",
        "summary": out / "summary.csv",
        "spacetime": out / "spacetime.csv",
        "conflicts": out / "conflicts.csv",
        "speed": out / "speed.csv",
    }
    write_events(files["events"], result.events)
    write_summary(files["summary"], [summary_row(result, scenario_id)])
    write_spacetime(files["spacetime"], result.report)
    write_series(files["conflicts"], result)
    write_speed(files["speed"], result.report)
    if result.trajectory_path is not None:
        files["trajectory"] = result.trajectory_path
    return files
