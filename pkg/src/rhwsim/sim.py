"""Simulation core: world construction, the per-tick update and full runs.

Tick order: insertion, TCS cycle, decisions (lane change then speed plan)
for vehicles whose action step is due, integration, staged stop,
collisions, exits, logging. Everything is deterministic in (config, seed).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import hazard as hz
from . import lanechange as lc
from .config import SimConfig, validate
from .driver import DriverParams, _safe_speed, plan_targets, integrate_speeds
from .population import sample_population
from .ssm import SsmAccumulator, SsmReport
from .tcs import TcsState, Zone, classify_zones, eebl_distance
from .world import Fleet, WorldState

log = logging.getLogger(__name__)


def seed_streams(seed: int):
    """Independent generators for arrivals+lanes, driver sampling and dawdling."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def arrival_schedule(config: SimConfig, rng: np.random.Generator):
    """Uniform headways of 3600/rate seconds, each arrival on a fair-coin lane."""
    dm = config.demand
    if dm.rate <= 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    headway = 3600.0 / dm.rate
    n = int(np.ceil(dm.horizon / headway - 1e-9))
    times = np.arange(n) * headway
    ticks = np.round(times / dm.step_length).astype(np.int64)
    ticks = ticks[ticks < config.n_ticks]
    lanes = rng.integers(0, config.road.lane_count, size=ticks.size)
    return ticks, lanes


def init_world(config: SimConfig) -> WorldState:
    config = validate(config)
    rng_arr, rng_drv, rng_dawdle = seed_streams(config.demand.seed)
    ticks, lanes = arrival_schedule(config, rng_arr)
    drivers, equipped = sample_population(
        config.drivers, ticks.size, config.demand.penetration, rng_drv,
        quota=config.demand.equip_quota)

    hp = config.hazard
    trigger_tick = int(round(hp.depart_time / config.step_length))
    with_trigger = hp.enabled and trigger_tick < config.n_ticks
    if with_trigger:
        # the doomed vehicle takes its place in the id sequence by departure time
        k = int(np.searchsorted(ticks, trigger_tick, side="right"))
        ticks = np.insert(ticks, k, trigger_tick)
        lanes = np.insert(lanes, k, config.road.hazard_lane_index)
        dd = config.drivers
        base = drivers[0] if drivers else None
        trig = DriverParams(
            sigma=hp.sigma, accel=hp.accel, decel=hp.decel, speed_factor=hp.speed_factor,
            tau=base.tau if base else 2.0,
            emergency_decel=max(hp.decel, base.emergency_decel if base else 4.5),
            max_speed=base.max_speed if base else 30.5,
            action_step_length=base.action_step_length if base else 0.9,
            lc_assertive=base.lc_assertive if base else 1.3,
        )
        drivers.insert(k, trig)
        equipped = np.insert(equipped, k, False)
    n = ticks.size
    fleet = Fleet(n)
    for vid, d in enumerate(drivers):
        fleet.set_driver(vid, d, config.step_length)
    fleet.length[:] = config.drivers.length
    fleet.min_gap[:] = config.drivers.min_gap
    fleet.equipped[:] = equipped
    fleet.lane[:] = lanes
    trigger_id = -1
    if with_trigger:
        trigger_id = k
        fleet.trigger[k] = True

    n_lanes = config.road.lane_count
    st_lane = config.ssm.spacetime_lane
    if st_lane < 0:
        st_lane = config.road.hazard_lane_index
    world = WorldState(
        config=config, fleet=fleet,
        lanes=[np.zeros(0, dtype=np.int64) for _ in range(n_lanes)],
        arr_tick=ticks, arr_lane=lanes,
        pending=[deque() for _ in range(n_lanes)],
        tcs=TcsState(config.tcs, n),
        rng_dawdle=rng_dawdle,
        eebl_d=eebl_distance(config.tcs, config.road.speed_limit),
        trigger_id=trigger_id,
    )
    world.ssm = SsmAccumulator(config.ssm, config.n_ticks, n, config.step_length,
                               config.horizon, config.road.length, st_lane)
    return world


def insert_vehicles(world: WorldState) -> WorldState:
    """Move due arrivals onto the road; a blocked entry waits for a later tick."""
    f = world.fleet
    cfg = world.config
    while world.next_arrival < world.arr_tick.size and \
            world.arr_tick[world.next_arrival] <= world.tick:
        vid = world.next_arrival
        world.pending[int(world.arr_lane[vid])].append(vid)
        world.next_arrival += 1
    limit = cfg.road.speed_limit
    for ln, queue in enumerate(world.pending):
        if not queue:
            continue
        vid = queue[0]
        desired = min(f.speed_factor[vid] * limit, f.max_speed[vid])
        front = f.length[vid]
        speed = desired
        ids = world.lanes[ln]
        if len(ids):
            last = ids[-1]
            gap = (f.pos[last] - f.length[last]) - front - f.min_gap[vid]
            if gap < 0:
                continue
            vl = f.speed[last]
            vs = _safe_speed(desired, vl, gap, f.tau[vid], f.decel[vid])
            if vs < 0:
                continue
            speed = min(desired, vs)
            speed = max(0.0, min(speed, _safe_speed(speed, vl, gap, f.tau[vid], f.decel[vid])))
        queue.popleft()
        f.pos[vid] = front
        f.speed[vid] = speed
        f.target[vid] = speed
        f.acc[vid] = 0.0
        f.brake[vid] = f.emerg[vid]
        f.lane[vid] = ln
        f.on_road[vid] = True
        f.next_tick[vid] = world.tick
        world.lanes[ln] = np.append(ids, vid)
        world.inserted += 1
        world.log("insert", vid, lane=ln, pos=front,
                  detail="equipped" if f.equipped[vid] else "")
    return world


def tcs_cycle(world: WorldState) -> WorldState:
    """CAM collection, hazard detection, zone tagging and message application."""
    cfg = world.config
    if not cfg.tcs.enabled:
        return world
    f = world.fleet
    order = world.order()
    had = world.hazard is not None
    eq = order[f.equipped[order]]
    world.tcs.observe(world.tick, world.clock, eq, f.pos[eq], f.lane[eq], f.acc[eq],
                      ~f.crashed[eq], world.crash_events)
    hazard = world.hazard
    if hazard is None:
        return world
    if not had:
        world.log("hazard", -1, lane=hazard.lane, pos=hazard.position, detail=hazard.source)
    zones = classify_zones(f.lane[order], f.pos[order], hazard.position, hazard.lane,
                           world.eebl_d, cfg.tcs.rhw_range)
    f.zone[order] = zones
    now = world.clock
    t = cfg.tcs
    live = f.equipped[order] & ~f.crashed[order]
    ids, zones = order[live], zones[live]
    if ids.size == 0:
        return world
    down = f.pos[ids] > hazard.position
    ctrl = f.force_lc[ids] | ~np.isnan(f.scr_cap[ids]) | f.gc_on[ids] | (f.ban[ids] >= 0)
    for vid in ids[down & ctrl]:
        world.log("release", vid, lane=f.lane[vid], pos=f.pos[vid])
    rel = ids[down]
    f.force_lc[rel] = False
    f.scr_cap[rel] = np.nan
    f.gc_on[rel] = False
    f.ban[rel] = -1

    up = ~down
    warn = up & ((zones == Zone.DANGEROUS) | (zones == Zone.NEAR_CRASH))
    cap = t.scr_factor * cfg.road.speed_limit
    scr = up & (zones != Zone.STANDARD)
    eebl = up & (zones == Zone.NEAR_CRASH)
    ban = up & (zones == Zone.SAFE)
    for vid in ids[warn & ~f.force_lc[ids]]:
        world.log("rhw", vid, lane=f.lane[vid], pos=f.pos[vid])
    for vid in ids[scr & (f.scr_cap[ids] != cap)]:
        world.log("scr", vid, lane=f.lane[vid], pos=f.pos[vid], detail=repr(t.scr_factor))
    if t.gap_duration >= 0:
        expired = f.gc_on[ids] & (now >= f.gc_start[ids] + t.gap_duration)
        f.gc_on[ids[expired]] = False
    new_gc = ids[eebl & ~f.gc_on[ids]]
    for vid in new_gc:
        world.log("eebl", vid, lane=f.lane[vid], pos=f.pos[vid])
    for vid in ids[ban & (f.ban[ids] != hazard.lane)]:
        world.log("ban", vid, lane=f.lane[vid], pos=f.pos[vid], detail=str(hazard.lane))
    f.force_lc[ids[warn]] = True
    f.scr_cap[ids[scr]] = cap
    f.gc_on[new_gc] = True
    f.gc_start[new_gc] = now
    f.ban[ids[ban]] = hazard.lane
    return world


def _leaders(world: WorldState):
    order = world.order()
    lane = world.fleet.lane[order]
    lead = np.full(order.size, -1, dtype=np.int64)
    if order.size > 1:
        same = lane[1:] == lane[:-1]
        lead[1:] = np.where(same, order[:-1], -1)
    return order, lead


def decide(world: WorldState) -> WorldState:
    """Lane change evaluation then speed planning for vehicles due to act."""
    f = world.fleet
    cfg = world.config
    order, lead = _leaders(world)
    if order.size == 0:
        return world
    due = (f.next_tick[order] <= world.tick) & ~f.crashed[order] & ~f.stopped[order]
    if not due.any():
        return world
    if lc.run_lane_changes(world, order[due], lead[due]):
        order, lead = _leaders(world)
        due = (f.next_tick[order] <= world.tick) & ~f.crashed[order] & ~f.stopped[order]
    vids, ld = order[due], lead[due]
    # dawdle draws go to deciding vehicles in id order
    rank = np.argsort(vids, kind="stable")
    u = np.empty(vids.size)
    u[rank] = world.rng_dawdle.random(vids.size)

    t = cfg.tcs
    now = world.clock
    limit = cfg.road.speed_limit
    has = ld >= 0
    li = np.where(has, ld, 0)
    gc = f.gc_on[vids]
    gap = (f.pos[li] - f.length[li]) - f.pos[vids] - f.min_gap[vids]
    extra = np.maximum(0.0, t.gap_space_headway - f.min_gap[vids])
    gap = np.where(gc, gap - extra, gap)
    tau = f.tau[vids]
    tau_eff = np.minimum(t.gap_time_headway, tau + t.gap_change_rate * (now - f.gc_start[vids]))
    desired = np.fmin(np.minimum(f.speed_factor[vids] * limit, f.max_speed[vids]),
                      f.scr_cap[vids])
    target, brake = plan_targets(
        f.speed[vids], desired, f.accel[vids], f.decel[vids], f.emerg[vids],
        f.action_step[vids], f.sigma[vids], tau, u, has, f.speed[li], gap,
        gc_active=gc, tau_eff=tau_eff, gc_max_decel=t.gap_max_decel)
    f.target[vids] = target
    f.brake[vids] = brake
    f.next_tick[vids] = world.tick + f.action_ticks[vids]
    return world


def integrate_all(world: WorldState) -> WorldState:
    f = world.fleet
    order = world.order()
    m = order[~f.crashed[order] & ~f.stopped[order]]
    if m.size == 0:
        return world
    dt = world.dt
    remaining = np.maximum(f.next_tick[m] - world.tick, 1) * dt
    v0 = f.speed[m]
    v1 = integrate_speeds(v0, f.target[m], f.accel[m], f.brake[m], dt, remaining)
    f.acc[m] = (v1 - v0) / dt
    f.speed[m] = v1
    f.pos[m] += v1 * dt
    return world


def handle_exits(world: WorldState) -> WorldState:
    f = world.fleet
    L = world.config.road.length
    for ln, ids in enumerate(world.lanes):
        if len(ids) == 0:
            continue
        gone = (f.pos[ids] - f.length[ids] > L) & ~f.crashed[ids]
        if not gone.any():
            continue
        for vid in ids[gone]:
            f.on_road[vid] = False
            world.log("exit", vid, lane=ln, pos=f.pos[vid])
            if vid == world.trigger_id and not world.staged_fired:
                log.warning("trigger vehicle %d left the road before its staged stop", vid)
                world.log("staged_stop_missed", vid, lane=ln, pos=f.pos[vid])
        world.exit_count += int(gone.sum())
        world.lanes[ln] = ids[~gone]
    return world


def record(world: WorldState) -> WorldState:
    f = world.fleet
    pos_r = np.round(f.pos, 6)
    speed_r = np.round(f.speed, 6)
    acc = world.ssm
    if acc.anchor is None and world.crash_events:
        acc.anchor = world.crash_events[0].time
    acc.update(world.tick, world.stamp, world.lanes, pos_r, speed_r, f.length, f.lane)
    if world.traj is not None:
        world.traj.write_tick(world, pos_r, speed_r)
    return world


def step(world: WorldState) -> WorldState:
    cfg = world.config
    assert world.tick < cfg.n_ticks, "step past the horizon"
    insert_vehicles(world)
    tcs_cycle(world)
    decide(world)
    integrate_all(world)
    hz.apply_staged_stop(world, cfg.hazard)
    for ev in hz.detect_collisions(world):
        hz.handle_crash(world, ev)
    handle_exits(world)
    record(world)
    world.tick += 1
    return world


@dataclass
class RunResult:
    config: SimConfig
    events: list
    crash_events: list
    exit_count: int
    inserted: int
    on_road: int
    queued: int
    report: SsmReport
    hazard: Optional[object] = None
    trajectory_path: Optional[Path] = None
    driver_params: dict = field(default_factory=dict, repr=False)


def run(config: SimConfig, trajectory_path=None, progress: bool = False) -> RunResult:
    world = init_world(config)
    if trajectory_path is not None:
        from .io import TrajectoryWriter
        world.traj = TrajectoryWriter(trajectory_path, config)
    n = config.n_ticks
    try:
        for k in range(n):
            step(world)
            if progress and k % 3000 == 0:
                log.info("t=%.0f s on road=%d exits=%d crashes=%d", world.clock,
                         world.on_road_count(), world.exit_count, len(world.crash_events))
    finally:
        if world.traj is not None:
            world.traj.close()
    report = world.ssm.report(len(world.crash_events), world.exit_count)
    f = world.fleet
    return RunResult(
        config=config, events=world.events, crash_events=world.crash_events,
        exit_count=world.exit_count, inserted=world.inserted,
        on_road=world.on_road_count(), queued=world.queued(), report=report,
        hazard=world.hazard,
        trajectory_path=Path(trajectory_path) if trajectory_path else None,
        driver_params={
            "sigma": f.sigma.copy(), "decel": f.decel.copy(), "accel": f.accel.copy(),
            "speed_factor": f.speed_factor.copy(), "trigger": f.trigger.copy(),
            "equipped": f.equipped.copy(),
        },
    )
