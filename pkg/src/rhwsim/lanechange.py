"""Lane changing: forced hazard-lane escape plus a speed-gain rule.

Gap acceptance compares each post-change gap with the secure gap of the
vehicle behind it, divided by the changer's ``lc_assertive``. At equal
speeds the secure gap is the car-following equilibrium gap
``min_gap + v * tau``; when the rear vehicle is faster its extra braking
distance is added, so a stopped car never cuts in front of fast traffic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .driver import _safe_speed

SPEED_GAIN = "speed_gain"
FORCED = "forced_hazard_escape"
NONE = "none"


@dataclass(frozen=True)
class LaneChangeDecision:
    target_lane: Optional[int]
    reason: str = NONE
    blocked_by_safety: bool = False


def equilibrium_gap(v, tau, min_gap):
    return min_gap + v * tau


def secure_gap(v_rear, v_front, tau, min_gap, decel, weight=1.0):
    """Bumper gap the rear vehicle needs behind the front one.

    ``weight`` scales the extra braking distance of a faster rear vehicle;
    0 leaves the plain equilibrium gap.
    """
    base = equilibrium_gap(v_rear, tau, min_gap)
    closing = (v_rear * v_rear - v_front * v_front) / (2.0 * decel)
    return base + weight * np.maximum(closing, 0.0)


def lane_neighbors(lanes, pos, position, target_lane):
    """Leader and follower ids (-1 if none) around each position in its target lane."""
    position = np.asarray(position, dtype=float)
    target_lane = np.asarray(target_lane)
    lead = np.full(position.shape, -1, dtype=np.int64)
    foll = np.full(position.shape, -1, dtype=np.int64)
    for ln, ids in enumerate(lanes):
        m = target_lane == ln
        if not m.any() or len(ids) == 0:
            continue
        k = np.searchsorted(-pos[ids], -position[m], side="left")
        lead[m] = np.where(k > 0, ids[np.maximum(k - 1, 0)], -1)
        foll[m] = np.where(k < len(ids), ids[np.minimum(k, len(ids) - 1)], -1)
    return lead, foll


def gaps_acceptable(fleet, vid, lead, foll, weight=1.0, blocked_speed=0.0):
    """Vectorized acceptance test for moving ``vid`` between ``foll`` and ``lead``.

    A changer slower than ``blocked_speed`` is stuck and settles for the
    plain equilibrium gaps.
    """
    f = fleet
    p, v = f.pos[vid], f.speed[vid]
    weight = np.where(v < blocked_speed, 0.0, weight)
    rear = p - f.length[vid]
    lca = f.lc_assertive[vid]
    ok = np.ones(np.shape(vid), dtype=bool)
    has_l = lead >= 0
    if has_l.any():
        li = np.where(has_l, lead, 0)
        gap_l = (f.pos[li] - f.length[li]) - p
        need_l = secure_gap(v, f.speed[li], f.tau[vid], f.min_gap[vid], f.decel[vid],
                            weight) / lca
        ok &= ~has_l | ((gap_l >= need_l) & (gap_l >= 0))
    has_f = foll >= 0
    if has_f.any():
        fi = np.where(has_f, foll, 0)
        gap_f = rear - f.pos[fi]
        need_f = secure_gap(f.speed[fi], v, f.tau[fi], f.min_gap[fi], f.decel[fi],
                            weight) / lca
        ok &= ~has_f | ((gap_f >= need_f) & (gap_f >= 0))
    return ok


def anticipated_speed(fleet, vid, lead, speed_limit):
    """Dawdle-free planned speed of ``vid`` if ``lead`` (-1: none) were its leader."""
    f = fleet
    v = f.speed[vid]
    desired = np.minimum(f.speed_factor[vid] * speed_limit, f.max_speed[vid])
    desired = np.fmin(desired, f.scr_cap[vid])
    out = np.minimum(desired, v + f.accel[vid] * f.action_step[vid])
    has = lead >= 0
    if has.any():
        li = np.where(has, lead, 0)
        gap = np.maximum((f.pos[li] - f.length[li]) - f.pos[vid] - f.min_gap[vid], 0.0)
        vs = np.maximum(0.0, _safe_speed(v, f.speed[li], gap, f.tau[vid], f.decel[vid]))
        out = np.where(has, np.minimum(out, vs), out)
    return out


def choose_targets(world, vids, cur_leader):
    """Proposed lane change for each deciding vehicle.

    Returns ``(target, reason, safe)``: target lane (-1 for none), reason code
    (0 none, 1 speed gain, 2 forced) and whether the gaps are acceptable now.
    """
    f = world.fleet
    cfg = world.config
    n_lanes = cfg.road.lane_count
    limit = cfg.road.speed_limit
    lane = f.lane[vids]
    hazard = world.hazard
    v_cur = anticipated_speed(f, vids, cur_leader, limit)

    best_t = np.full(vids.shape, -1, dtype=np.int64)
    best_v = np.full(vids.shape, -np.inf)
    best_safe = np.zeros(vids.shape, dtype=bool)
    for d in (-1, 1):
        tl = lane + d
        valid = (tl >= 0) & (tl < n_lanes) & (tl != f.ban[vids])
        if not valid.any():
            continue
        sub = vids[valid]
        lead, foll = lane_neighbors(world.lanes, f.pos, f.pos[sub], tl[valid])
        v_adj = np.full(vids.shape, -np.inf)
        v_adj[valid] = anticipated_speed(f, sub, lead, limit)
        safe = np.zeros(vids.shape, dtype=bool)
        safe[valid] = gaps_acceptable(f, sub, lead, foll, cfg.drivers.lc_brake_weight,
                                      cfg.drivers.lc_blocked_speed)
        better = v_adj > best_v  # ties keep the lower lane index
        best_t = np.where(better, tl, best_t)
        best_v = np.where(better, v_adj, best_v)
        best_safe = np.where(better, safe, best_safe)

    forced = f.force_lc[vids]
    if hazard is not None:
        forced &= lane == hazard.lane
    else:
        forced[:] = False
    gain = ~forced & (best_v > v_cur + cfg.drivers.speed_gain_threshold)
    reason = np.where(forced & (best_t >= 0), 2, np.where(gain & (best_t >= 0), 1, 0))
    target = np.where(reason > 0, best_t, -1)
    return target, reason, best_safe & (reason > 0)


def evaluate_lane_change(vehicle, world) -> LaneChangeDecision:
    vid = np.array([vehicle.id])
    lead = world.leader_of(vehicle.id)
    target, reason, safe = choose_targets(world, vid, np.array([-1 if lead is None else lead]))
    if reason[0] == 0:
        return LaneChangeDecision(None)
    return LaneChangeDecision(int(target[0]), FORCED if reason[0] == 2 else SPEED_GAIN,
                              blocked_by_safety=not bool(safe[0]))


def safety_check(vehicle, target_lane: int, world) -> bool:
    if not 0 <= target_lane < world.config.road.lane_count:
        raise ValueError(f"lane {target_lane} does not exist")
    vid = np.array([vehicle.id])
    lead, foll = lane_neighbors(world.lanes, world.fleet.pos,
                                np.array([world.fleet.pos[vehicle.id]]), np.array([target_lane]))
    return bool(gaps_acceptable(world.fleet, vid, lead, foll,
                                world.config.drivers.lc_brake_weight,
                                world.config.drivers.lc_blocked_speed)[0])


def execute_lane_change(world, vid: int, target_lane: int, reason: str = SPEED_GAIN):
    f = world.fleet
    src = int(f.lane[vid])
    assert src != target_lane
    world.remove_ordered(vid, src)
    f.lane[vid] = target_lane
    world.insert_ordered(vid, target_lane)
    ids = world.lanes[target_lane]
    k = int(np.flatnonzero(ids == vid)[0])
    if k > 0:
        lead = ids[k - 1]
        assert f.pos[lead] - f.length[lead] >= f.pos[vid], "lane change created an overlap"
    if k + 1 < len(ids):
        foll = ids[k + 1]
        assert f.pos[vid] - f.length[vid] >= f.pos[foll], "lane change created an overlap"
    world.log("lane_change", vid, lane=target_lane, pos=f.pos[vid],
              detail=f"{src}->{target_lane}:{reason}")
    return world


def run_lane_changes(world, vids, cur_leader) -> int:
    """Evaluate and execute lane changes for the deciding vehicles.

    Changes go downstream first and each is re-checked against the lanes as
    already modified this tick, so an upstream vehicle competing for the
    same gap yields.
    """
    f = world.fleet
    movable = ~f.trigger[vids]
    vids, cur_leader = vids[movable], cur_leader[movable]
    if vids.size == 0:
        return 0
    target, reason, safe = choose_targets(world, vids, cur_leader)
    cand = np.flatnonzero(safe)
    if cand.size == 0:
        return 0
    cand = cand[np.lexsort((vids[cand], -f.pos[vids[cand]]))]
    done = 0
    for k in cand:
        vid, tl = int(vids[k]), int(target[k])
        lead, foll = lane_neighbors(world.lanes, f.pos, np.array([f.pos[vid]]), np.array([tl]))
        if not gaps_acceptable(f, np.array([vid]), lead, foll,
                               world.config.drivers.lc_brake_weight,
                               world.config.drivers.lc_blocked_speed)[0]:
            continue
        execute_lane_change(world, vid, tl, FORCED if reason[k] == 2 else SPEED_GAIN)
        done += 1
    return done
