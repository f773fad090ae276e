"""Staged abrupt stop, collision detection and crash handling."""

from __future__ import annotations

import numpy as np

from .config import HazardPlan
from .world import CrashEvent


def apply_staged_stop(world, plan: HazardPlan):
    """Stop the trigger vehicle dead once its front reaches the trigger position."""
    if not plan.enabled or world.staged_fired or world.trigger_id < 0:
        return world
    f = world.fleet
    vid = world.trigger_id
    if not f.on_road[vid]:
        return world
    if f.pos[vid] >= plan.trigger_position:
        f.acc[vid] = -f.speed[vid] / world.dt
        f.speed[vid] = 0.0
        f.target[vid] = 0.0
        f.stopped[vid] = True
        world.staged_fired = True
        world.log("staged_stop", vid, lane=f.lane[vid], pos=f.pos[vid])
    return world


def detect_collisions(world) -> list:
    """Follower-into-leader bumper overlaps found this tick, downstream first."""
    f = world.fleet
    found = []
    for ln, ids in enumerate(world.lanes):
        if len(ids) < 2:
            continue
        lead, foll = ids[:-1], ids[1:]
        hit = f.pos[foll] >= f.pos[lead] - f.length[lead]
        hit &= ~(f.crashed[foll] & f.crashed[lead])
        for k in np.flatnonzero(hit):
            a, b = int(foll[k]), int(lead[k])
            if (min(a, b), max(a, b)) in world.crash_pairs:
                continue
            found.append(CrashEvent(world.stamp, a, b, ln, float(f.pos[a])))
    found.sort(key=lambda e: (-e.position, e.lane))
    return found


def handle_crash(world, event: CrashEvent):
    f = world.fleet
    key = (min(event.follower, event.leader), max(event.follower, event.leader))
    if key in world.crash_pairs:
        return world
    world.crash_pairs.add(key)
    for vid in (event.follower, event.leader):
        f.crashed[vid] = True
        f.speed[vid] = 0.0
        f.target[vid] = 0.0
    world.crash_events.append(event)
    world.log("crash", event.follower, event.leader, event.lane, event.position)
    return world
