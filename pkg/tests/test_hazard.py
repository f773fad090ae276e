import numpy as np
import pytest

from rhwsim.config import ConfigError, SimConfig
from rhwsim.hazard import apply_staged_stop, detect_collisions, handle_crash
from rhwsim.sim import handle_exits

from conftest import make_world


def test_staged_stop_fires_once_at_trigger():
    cfg = SimConfig().with_overrides(demand={"rate": 0.0})
    w = make_world([dict(lane=0, pos=3999.0, speed=30.0)], cfg)
    w.trigger_id = 0
    apply_staged_stop(w, cfg.hazard)
    assert not w.staged_fired
    w.fleet.pos[0] = 4000.0
    apply_staged_stop(w, cfg.hazard)
    assert w.staged_fired and w.fleet.speed[0] == 0.0 and w.fleet.stopped[0]
    n = len(w.events)
    apply_staged_stop(w, cfg.hazard)
    assert len(w.events) == n


def test_disabled_plan_is_inert():
    cfg = SimConfig().with_overrides(demand={"rate": 0.0}, hazard={"enabled": False})
    w = make_world([dict(lane=0, pos=4100.0, speed=30.0)], cfg)
    w.trigger_id = 0
    apply_staged_stop(w, cfg.hazard)
    assert w.fleet.speed[0] == 30.0 and not w.staged_fired


def test_trigger_outside_road_is_invalid():
    with pytest.raises(ConfigError, match="hazard.trigger_position"):
        SimConfig().with_overrides(hazard={"trigger_position": 6000.0})


def test_trigger_exit_before_stop_is_logged():
    cfg = SimConfig().with_overrides(demand={"rate": 0.0}, hazard={"trigger_position": 4999.0})
    w = make_world([dict(lane=0, pos=5006.0, speed=30.0)], cfg)
    w.trigger_id = 0
    handle_exits(w)
    assert [e.kind for e in w.events][-2:] == ["exit", "staged_stop_missed"]


def test_overlap_detected():
    # follower front 3999.0, leader rear 3998.5
    w = make_world([dict(lane=0, pos=4003.5, speed=0.0), dict(lane=0, pos=3999.0, speed=10.0)])
    ev = detect_collisions(w)
    assert len(ev) == 1 and (ev[0].follower, ev[0].leader) == (1, 0)


def test_touching_counts_as_collision():
    w = make_world([dict(lane=0, pos=4005.0, speed=0.0), dict(lane=0, pos=4000.0, speed=10.0)])
    assert len(detect_collisions(w)) == 1


def test_pileup_pairwise_and_ordered():
    w = make_world([
        dict(lane=0, pos=4000.0, speed=0.0),
        dict(lane=0, pos=3995.5, speed=5.0),
        dict(lane=0, pos=3991.0, speed=9.0),
        dict(lane=1, pos=3000.0, speed=9.0),
        dict(lane=1, pos=2996.0, speed=9.0),
    ])
    ev = detect_collisions(w)
    assert [(e.follower, e.leader) for e in ev] == [(1, 0), (2, 1), (4, 3)]
    assert ev == detect_collisions(w)


def test_crash_freezes_pair_and_counts_once():
    w = make_world([dict(lane=0, pos=4000.0, speed=0.0), dict(lane=0, pos=3996.0, speed=10.0),
                    dict(lane=0, pos=3980.0, speed=10.0)])
    for e in detect_collisions(w):
        handle_crash(w, e)
    assert len(w.crash_events) == 1 and w.fleet.crashed[:2].all()
    assert w.fleet.speed[1] == 0.0
    # same pair again: no new event
    assert detect_collisions(w) == []
    # a second follower hits the frozen pair
    w.remove_ordered(2, 0)
    w.fleet.pos[2] = 3991.5
    w.insert_ordered(2, 0)
    for e in detect_collisions(w):
        handle_crash(w, e)
    assert len(w.crash_events) == 2
    assert sum(e.kind == "crash" for e in w.events) == 2


def test_crashed_vehicles_never_exit():
    cfg = SimConfig().with_overrides(demand={"rate": 0.0}, hazard={"enabled": False})
    w = make_world([dict(lane=0, pos=5100.0, speed=0.0, crashed=True)], cfg)
    handle_exits(w)
    assert w.exit_count == 0 and list(w.lanes[0]) == [0]


def test_crashed_positions_constant_in_a_run():
    from rhwsim.sim import init_world, step

    cfg = SimConfig().with_overrides(demand={"horizon": 240.0, "seed": 1},
                                     hazard={"depart_time": 20.0, "trigger_position": 1500.0})
    w = init_world(cfg)
    frozen = {}
    for _ in range(cfg.n_ticks):
        step(w)
        for vid in np.flatnonzero(w.fleet.crashed):
            frozen.setdefault(int(vid), float(w.fleet.pos[vid]))
            assert w.fleet.pos[vid] == frozen[int(vid)]
    assert w.staged_fired
    assert len(w.crash_events) == len({(min(e.follower, e.leader), max(e.follower, e.leader))
                                       for e in w.crash_events})
