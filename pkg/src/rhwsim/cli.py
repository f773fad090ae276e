"""Command line entry point: ``run``, ``sweep`` and ``ssm``.

Exit codes: 0 success, 1 invalid config or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, SimConfig, parse_config, validate

log = logging.getLogger("rhwsim")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load(path) -> SimConfig:
    return parse_config(path) if path else validate(SimConfig())


def cmd_run(args) -> int:
    from .io import emit_outputs
    from .sim import run

    cfg = _load(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(demand=replace(cfg.demand, seed=args.seed))
    cfg = validate(cfg)
    out = Path(args.out)
    traj = out / "trajectory.csv" if (args.traj or cfg.output.trajectory) else None
    if traj is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = run(cfg, trajectory_path=traj, progress=args.verbose)
    files = emit_outputs(result, out)
    rep = result.report
    print(f"seed={cfg.seed} crashes={rep.crash_count} flow={rep.flow:.1f} veh/h "
          f"tit={rep.tit:.6f} min_ttc={rep.min_ttc:.3f} s "
          f"ttc_events={rep.critical_ttc_events} drac_events={rep.critical_drac_events}")
    for name, p in files.items():
        print(f"  {name}: {p}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .scenarios import grid_by_name, parse_seeds, run_sweep

    cfg = _load(args.config)
    try:
        seeds = parse_seeds(args.seeds)
    except ValueError as e:
        raise ConfigError(f"--seeds: {e}") from None
    specs = grid_by_name(args.grid, seeds, cfg)
    rows = run_sweep(cfg, specs, args.out, jobs=args.jobs, run_outputs=args.run_outputs)
    for r in rows:
        if r["seed"] != "mean":
            continue
        print(f"scenario {r['scenario_id']:2d} p={r['penetration']:.2f} "
              f"scr={r['scr_factor']:.2f} crashes={r['crashes']:.2f} "
              f"flow={r['flow_vph']:.1f} tit={r['tit']:.3f}")
    failed = [r for r in rows if r["seed"] != "mean" and r.get("error")]
    print(f"summary: {Path(args.out) / 'summary.csv'}")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_ssm(args) -> int:
    from .oracle import recompute

    for name in ("ttc_star", "drac_star", "window", "veh_length", "max_gap", "dt"):
        v = getattr(args, name)
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(f"--{name.replace('_', '-')}: must be > 0")
    path = Path(args.traj)
    if not path.is_file():
        raise ConfigError(f"--traj: file not found: {path}")
    rep = recompute(path, args.ttc_star, args.drac_star, args.window, args.crash_time,
                    args.veh_length, args.max_gap, args.dt)
    anchor = "none" if rep.tit_anchor is None else f"{rep.tit_anchor:.6f}"
    print(f"tit={rep.tit:.12g}")
    print(f"tit_anchor_s={anchor}")
    print(f"min_ttc_s={rep.min_ttc:.6f}")
    print(f"ttc_events={rep.critical_ttc_events}")
    print(f"drac_events={rep.critical_drac_events}")
    print(f"crashed_vehicles={rep.crashed_vehicles}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rhwsim",
                                description="Two-lane freeway hazard warning simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--config", help="config file (defaults when omitted)")
    r.add_argument("--seed", type=int, help="override demand.seed")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--traj", action="store_true", help="also write trajectory.csv")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="scenario x seed sweep")
    s.add_argument("--config", help="base config file")
    s.add_argument("--seeds", required=True, help="comma list, ranges allowed: 0-9,42")
    s.add_argument("--out", required=True)
    s.add_argument("--grid", choices=["table4"], help="17-scenario penetration x SCR grid")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--run-outputs", action="store_true",
                   help="keep events/summary/space-time files of every run")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("ssm", help="recompute safety measures from a trajectory file")
    m.add_argument("--traj", required=True)
    m.add_argument("--ttc-star", type=float, default=1.5)
    m.add_argument("--drac-star", type=float, default=3.35)
    m.add_argument("--window", type=float, default=15.0, help="TIT window after the crash [s]")
    m.add_argument("--crash-time", type=float, help="TIT anchor; default: first crashed row")
    m.add_argument("--veh-length", type=float, default=5.0)
    m.add_argument("--max-gap", type=float, default=250.0)
    m.add_argument("--dt", type=float, default=0.1, help="trajectory time step [s]")
    m.set_defaults(func=cmd_ssm)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
