from collections import deque

import numpy as np

from rhwsim.config import SimConfig
from rhwsim.driver import DriverParams
from rhwsim.ssm import SsmAccumulator
from rhwsim.tcs import TcsState, eebl_distance
from rhwsim.world import Fleet, WorldState


def make_world(vehicles, config=None, seed=0):
    """World with hand-placed vehicles.

    ``vehicles`` is a list of dicts with ``lane``, ``pos``, ``speed`` and
    optional driver fields (``tau``, ``decel``, ``lc_assertive``...) or
    fleet flags (``equipped``, ``crashed``, ``ban``...). ``queued=True``
    puts the vehicle in its lane's entry queue instead of on the road.
    """
    cfg = config or SimConfig().with_overrides(demand={"rate": 0.0},
                                               hazard={"enabled": False})
    n = len(vehicles)
    fleet = Fleet(n)
    dp_fields = set(DriverParams.__dataclass_fields__)
    for vid, spec in enumerate(vehicles):
        spec = dict(spec)
        d = DriverParams(**{k: spec.pop(k) for k in list(spec) if k in dp_fields})
        fleet.set_driver(vid, d, cfg.step_length)
        fleet.length[vid] = spec.pop("length", cfg.drivers.length)
        fleet.min_gap[vid] = spec.pop("min_gap", cfg.drivers.min_gap)
        spec.pop("lane"), spec.pop("pos"), spec.pop("speed"), spec.pop("queued", None)
        for k, v in spec.items():
            getattr(fleet, k)[vid] = v
    world = WorldState(
        config=cfg, fleet=fleet,
        lanes=[np.zeros(0, dtype=np.int64) for _ in range(cfg.road.lane_count)],
        arr_tick=np.zeros(0, dtype=np.int64), arr_lane=np.zeros(0, dtype=np.int64),
        pending=[deque() for _ in range(cfg.road.lane_count)],
        tcs=TcsState(cfg.tcs, n), rng_dawdle=np.random.default_rng(seed),
        eebl_d=eebl_distance(cfg.tcs, cfg.road.speed_limit),
    )
    world.ssm = SsmAccumulator(cfg.ssm, cfg.n_ticks, n, cfg.step_length, cfg.horizon,
                               cfg.road.length, cfg.road.hazard_lane_index)
    for vid, spec in enumerate(vehicles):
        if spec.get("queued"):
            world.pending[spec["lane"]].append(vid)
        else:
            world.place(vid, spec["lane"], spec["pos"], spec["speed"])
    return world


ACCEPTANCE_LINES = []


def report_criterion(name, ok, detail=""):
    """Record one acceptance verdict; all are printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
