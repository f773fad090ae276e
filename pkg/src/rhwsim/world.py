"""World state: vehicle storage as parallel arrays plus per-lane orderings."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SimConfig
from .driver import DriverParams, GapControlState, VehicleState
from .tcs import ZONE_LABELS, TcsState, Zone


class Fleet:
    """One slot per scheduled vehicle; the slot index is the vehicle id."""

    FLOATS = ("pos", "speed", "acc", "length", "min_gap", "sigma", "tau", "accel",
              "decel", "emerg", "max_speed", "speed_factor", "lc_assertive",
              "action_step", "target", "brake", "scr_cap", "gc_start")
    BOOLS = ("equipped", "crashed", "stopped", "on_road", "trigger", "force_lc", "gc_on")
    INTS = ("lane", "action_ticks", "next_tick", "ban")

    def __init__(self, n: int):
        self.n = n
        for name in self.FLOATS:
            setattr(self, name, np.zeros(n))
        for name in self.BOOLS:
            setattr(self, name, np.zeros(n, dtype=bool))
        for name in self.INTS:
            setattr(self, name, np.zeros(n, dtype=np.int64))
        self.zone = np.zeros(n, dtype=np.int8)
        self.scr_cap[:] = np.nan
        self.ban[:] = -1

    def set_driver(self, vid: int, d: DriverParams, step_length: float):
        self.sigma[vid] = d.sigma
        self.tau[vid] = d.tau
        self.accel[vid] = d.accel
        self.decel[vid] = d.decel
        self.emerg[vid] = d.emergency_decel
        self.max_speed[vid] = d.max_speed
        self.speed_factor[vid] = d.speed_factor
        self.lc_assertive[vid] = d.lc_assertive
        self.action_step[vid] = d.action_step_length
        self.action_ticks[vid] = max(1, int(round(d.action_step_length / step_length)))

    def driver(self, vid: int) -> DriverParams:
        return DriverParams(
            sigma=float(self.sigma[vid]), tau=float(self.tau[vid]),
            accel=float(self.accel[vid]), decel=float(self.decel[vid]),
            emergency_decel=float(self.emerg[vid]), max_speed=float(self.max_speed[vid]),
            speed_factor=float(self.speed_factor[vid]),
            action_step_length=float(self.action_step[vid]),
            lc_assertive=float(self.lc_assertive[vid]),
        )


@dataclass
class Event:
    time: float
    kind: str
    veh_id: int
    other_id: int = -1
    lane: int = -1
    pos: float = float("nan")
    detail: str = ""


@dataclass(frozen=True)
class CrashEvent:
    time: float
    follower: int
    leader: int
    lane: int
    position: float


@dataclass
class WorldState:
    config: SimConfig
    fleet: Fleet
    lanes: list  # per lane: ids ordered downstream -> upstream
    arr_tick: np.ndarray  # scheduled arrival tick per id (sorted)
    arr_lane: np.ndarray
    pending: list  # per lane deque of ids waiting to enter
    tcs: TcsState
    rng_dawdle: np.random.Generator
    eebl_d: float
    trigger_id: int = -1
    tick: int = 0
    next_arrival: int = 0
    inserted: int = 0
    exit_count: int = 0
    events: list = field(default_factory=list)
    crash_events: list = field(default_factory=list)
    crash_pairs: set = field(default_factory=set)
    staged_fired: bool = False
    ssm: Optional[object] = None  # ssm.SsmAccumulator
    traj: Optional[object] = None  # io.TrajectoryWriter

    @property
    def dt(self) -> float:
        return self.config.demand.step_length

    @property
    def clock(self) -> float:
        return round(self.tick * self.dt, 9)

    @property
    def stamp(self) -> float:
        """Time label of the state produced by the tick in progress."""
        return round((self.tick + 1) * self.dt, 9)

    @property
    def hazard(self):
        return self.tcs.hazard

    def order(self) -> np.ndarray:
        if not self.lanes:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.lanes)

    def on_road_count(self) -> int:
        return int(sum(len(a) for a in self.lanes))

    def queued(self) -> int:
        return int(sum(len(q) for q in self.pending))

    def log(self, kind: str, vid: int, other: int = -1, lane: int = -1,
            pos: float = float("nan"), detail: str = ""):
        self.events.append(Event(self.stamp, kind, int(vid), int(other), int(lane),
                                 float(pos), detail))

    # -- single-vehicle views ------------------------------------------------

    def vehicle(self, vid: int) -> VehicleState:
        f = self.fleet
        gc = None
        if f.gc_on[vid]:
            t = self.config.tcs
            gc = GapControlState(t.gap_time_headway, t.gap_space_headway, t.gap_duration,
                                 t.gap_change_rate, t.gap_max_decel, float(f.gc_start[vid]))
        return VehicleState(
            id=int(vid), lane=int(f.lane[vid]), position=float(f.pos[vid]),
            speed=float(f.speed[vid]), driver=f.driver(vid),
            acceleration=float(f.acc[vid]), length=float(f.length[vid]),
            min_gap=float(f.min_gap[vid]), equipped=bool(f.equipped[vid]),
            crashed=bool(f.crashed[vid]), zone=ZONE_LABELS[Zone(int(f.zone[vid]))],
            gap_control=gc,
            scr_cap=None if np.isnan(f.scr_cap[vid]) else float(f.scr_cap[vid]),
            force_lc=bool(f.force_lc[vid]),
            lane_entry_ban=None if f.ban[vid] < 0 else int(f.ban[vid]),
            next_decision_time=round(int(f.next_tick[vid]) * self.dt, 9),
            stopped=bool(f.stopped[vid]),
        )

    def leader_of(self, vid: int) -> Optional[int]:
        ids = self.lanes[int(self.fleet.lane[vid])]
        k = int(np.flatnonzero(ids == vid)[0])
        return int(ids[k - 1]) if k > 0 else None

    def place(self, vid: int, lane: int, position: float, speed: float = 0.0):
        """Put a vehicle on the road directly (test and tooling helper)."""
        f = self.fleet
        f.pos[vid] = position
        f.speed[vid] = speed
        f.target[vid] = speed
        f.brake[vid] = f.emerg[vid]
        f.lane[vid] = lane
        f.on_road[vid] = True
        f.next_tick[vid] = self.tick
        self.insert_ordered(vid, lane)
        self.inserted += 1

    def insert_ordered(self, vid: int, lane: int):
        ids = self.lanes[lane]
        k = int(np.searchsorted(-self.fleet.pos[ids], -self.fleet.pos[vid], side="right"))
        self.lanes[lane] = np.insert(ids, k, vid)

    def remove_ordered(self, vid: int, lane: int):
        ids = self.lanes[lane]
        self.lanes[lane] = ids[ids != vid]

    def check_ordering(self):
        for ln, ids in enumerate(self.lanes):
            p = self.fleet.pos[ids]
            assert np.all(np.diff(p) < 0) or len(ids) < 2, f"lane {ln} out of order"
