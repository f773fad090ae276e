"""Scenario grid and multi-seed sweeps."""

from __future__ import annotations

import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .config import SimConfig
from .io import SUMMARY_COLUMNS, emit_outputs, summary_row, write_summary

log = logging.getLogger(__name__)

PENETRATIONS = (0.25, 0.5, 0.75, 1.0)
SCR_FACTORS = (0.5, 0.75, 0.85, 1.0)
METRICS = ("tit", "crashes", "flow_vph", "min_ttc_s", "ttc_events", "drac_events")
SWEEP_COLUMNS = SUMMARY_COLUMNS + ("error",)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: int
    penetration: float
    scr_factor: float
    seeds: tuple = (0,)

    def __post_init__(self):
        if not 0.0 <= self.penetration <= 1.0:
            raise ValueError(f"penetration {self.penetration} outside [0, 1]")
        if not 0.0 < self.scr_factor <= 1.0:
            raise ValueError(f"scr_factor {self.scr_factor} outside (0, 1]")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def config_for(self, base: SimConfig, seed: int) -> SimConfig:
        """Base config with this scenario's penetration, SCR factor and seed."""
        return base.with_overrides(
            demand=replace(base.demand, penetration=self.penetration, seed=seed),
            tcs=replace(base.tcs, scr_factor=self.scr_factor),
        )


def table4_grid(seeds: Sequence[int] = (0,)) -> list:
    """The 17 scenarios: id 1 is the unequipped baseline, then penetration x SCR factor."""
    specs = [ScenarioSpec(1, 0.0, 1.0, tuple(seeds))]
    sid = 2
    for p in PENETRATIONS:
        for f in SCR_FACTORS:
            specs.append(ScenarioSpec(sid, p, f, tuple(seeds)))
            sid += 1
    return specs


def _run_one(args):
    from .sim import run

    spec, base, seed, out_dir = args
    try:
        cfg = spec.config_for(base, seed)
        result = run(cfg)
        row = summary_row(result, spec.scenario_id)
        if out_dir is not None:
            emit_outputs(result, Path(out_dir) / f"s{spec.scenario_id:02d}_seed{seed}",
                         spec.scenario_id)
        row["error"] = ""
    except Exception as e:  # recorded in the row, the sweep goes on
        log.error("scenario %d seed %d failed: %s", spec.scenario_id, seed, e)
        log.debug(traceback.format_exc())
        row = {"scenario_id": spec.scenario_id, "penetration": spec.penetration,
               "scr_factor": spec.scr_factor, "seed": seed,
               "error": f"{type(e).__name__}: {e}".replace(",", ";").replace("\n", " ")}
    return row


def mean_row(spec: ScenarioSpec, rows: list) -> dict:
    ok = [r for r in rows if not r.get("error")]
    out = {"scenario_id": spec.scenario_id, "penetration": spec.penetration,
           "scr_factor": spec.scr_factor, "seed": "mean",
           "error": "" if len(ok) == len(rows) else f"{len(rows) - len(ok)} failed"}
    for m in METRICS:
        vals = [float(r[m]) for r in ok if not math.isnan(float(r[m]))]
        out[m] = math.fsum(vals) / len(vals) if vals else math.nan
    return out


def run_sweep(base: SimConfig, specs: Sequence[ScenarioSpec], out_dir=None,
              jobs: int = 1, run_outputs: bool = False) -> list:
    """Run every (scenario, seed) pair and return per-seed rows followed by mean rows.

    Runs are independent; with ``jobs > 1`` they execute in worker processes.
    Rows are ordered by (scenario, seed position) whatever the completion order.
    """
    tasks = []
    per_run_dir = Path(out_dir) / "runs" if (out_dir is not None and run_outputs) else None
    for spec in specs:
        for seed in spec.seeds:
            tasks.append((spec, base, seed, per_run_dir))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]

    out_rows = list(rows)
    k = 0
    for spec in specs:
        n = len(spec.seeds)
        out_rows.append(mean_row(spec, rows[k:k + n]))
        k += n
    if out_dir is not None:
        write_summary(Path(out_dir) / "summary.csv", out_rows, SWEEP_COLUMNS)
    return out_rows


def parse_seeds(text: str) -> tuple:
    """``"1,2,5-8"`` -> (1, 2, 5, 6, 7, 8)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise ValueError(f"bad seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return tuple(seeds)


def grid_by_name(name: Optional[str], seeds, base: SimConfig) -> list:
    if name is None:
        d, t = base.demand, base.tcs
        return [ScenarioSpec(0, d.penetration, t.scr_factor, tuple(seeds))]
    if name == "table4":
        return table4_grid(seeds)
    raise ValueError(f"unknown grid {name!r}")
