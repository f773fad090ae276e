"""Traffic Control Server: hazard detection, zones and warning dispatch.

Equipped vehicles report a CAM every tick. Once a hazard is latched the
server tags every vehicle with a zone and sends, to equipped vehicles only,

    Dangerous  -> RHW + SCR
    NearCrash  -> RHW + SCR + EEBL
    Safe       -> SCR + ban on entering the hazard lane
    Standard   -> nothing

Controls are released when a vehicle's front passes the hazard position.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from .config import TcsConfig
from .driver import GapControlState, VehicleState, apply_scr


class Zone(IntEnum):
    STANDARD = 0
    SAFE = 1
    DANGEROUS = 2
    NEAR_CRASH = 3

    @property
    def label(self) -> str:
        return ZONE_LABELS[self]


ZONE_LABELS = {Zone.STANDARD: "Standard", Zone.SAFE: "Safe",
               Zone.DANGEROUS: "Dangerous", Zone.NEAR_CRASH: "NearCrash"}


@dataclass(frozen=True)
class Cam:
    vehicle: int
    time: float
    position: float
    lane: int
    speed: float
    acceleration: float


@dataclass(frozen=True)
class Hazard:
    position: float
    lane: int
    time: float
    source: str  # "decel", "silence" or "crash"


@dataclass(frozen=True)
class TcsMessage:
    kind: str  # "RHW", "EEBL" or "SCR"
    recipient: int
    payload: object = None


def eebl_distance(config: TcsConfig, speed_limit: float) -> float:
    """Distance upstream of the hazard inside which EEBL warnings are sent.

    Default reading: safety factor times the stopping distance,
    ``SF * (RT*V + V**2 / (2d))``. ``eebl_formula = "literal"`` gives the
    product form ``RT * V * SF * V**2 / (2d)`` instead.
    """
    d, rt, sf, v = (config.decel_ability, config.reaction_time,
                    config.safety_factor, speed_limit)
    if d <= 0:
        raise ValueError("deceleration ability must be positive")
    if config.eebl_formula == "literal":
        return rt * v * sf * v * v / (2.0 * d)
    return sf * (rt * v + v * v / (2.0 * d))


def classify_zones(lane, position, hazard_pos, hazard_lane, eebl_d, rhw_range):
    """Zone code per vehicle; NearCrash beats Dangerous beats Safe beats Standard."""
    lane = np.asarray(lane)
    up = hazard_pos - np.asarray(position, dtype=float)
    on = lane == hazard_lane
    zone = np.full(up.shape, Zone.STANDARD, dtype=np.int8)
    within = (up >= 0) & (up <= rhw_range)
    zone[~on & within] = Zone.SAFE
    zone[on & (up > eebl_d) & (up <= rhw_range)] = Zone.DANGEROUS
    zone[on & (up >= 0) & (up <= eebl_d)] = Zone.NEAR_CRASH
    return zone


def classify_zone(vehicle: VehicleState, hazard: Hazard, config: TcsConfig,
                  speed_limit: float = 30.56) -> Zone:
    z = classify_zones(np.array([vehicle.lane]), np.array([vehicle.position]),
                       hazard.position, hazard.lane,
                       eebl_distance(config, speed_limit), config.rhw_range)
    return Zone(int(z[0]))


def gap_control_template(config: TcsConfig, start_time: float) -> GapControlState:
    return GapControlState(
        target_time_headway=config.gap_time_headway,
        target_space_headway=config.gap_space_headway,
        duration=config.gap_duration,
        change_rate=config.gap_change_rate,
        max_decel=config.gap_max_decel,
        start_time=start_time,
    )


def messages_for_zone(zone: Zone, recipient: int, hazard: Hazard, config: TcsConfig,
                      now: float) -> list:
    rhw = TcsMessage("RHW", recipient, (hazard.position, hazard.lane))
    scr = TcsMessage("SCR", recipient, config.scr_factor)
    if zone == Zone.DANGEROUS:
        return [rhw, scr]
    if zone == Zone.NEAR_CRASH:
        return [rhw, scr, TcsMessage("EEBL", recipient, gap_control_template(config, now))]
    if zone == Zone.SAFE:
        return [scr]
    return []


def apply_message(vehicle: VehicleState, msg: TcsMessage, speed_limit: float = 30.56,
                  now: float = 0.0) -> VehicleState:
    """Driver response to one message. Repeated delivery is a no-op."""
    assert vehicle.equipped, f"message {msg.kind} sent to non-equipped vehicle {vehicle.id}"
    assert not vehicle.crashed
    if msg.kind == "RHW":
        vehicle.force_lc = True
    elif msg.kind == "SCR":
        apply_scr(vehicle, msg.payload, speed_limit)
    elif msg.kind == "EEBL":
        if vehicle.gap_control is None or not vehicle.gap_control.active(now):
            vehicle.gap_control = msg.payload
    else:
        raise ValueError(f"unknown message kind {msg.kind!r}")
    return vehicle


def apply_zone_controls(vehicle: VehicleState, zone: Zone, hazard: Hazard,
                        config: TcsConfig, speed_limit: float, now: float) -> VehicleState:
    """Deliver this tick's messages for ``zone`` (or release controls past the hazard)."""
    if not vehicle.equipped or vehicle.crashed:
        return vehicle
    if vehicle.position > hazard.position:
        return release(vehicle)
    for msg in messages_for_zone(zone, vehicle.id, hazard, config, now):
        apply_message(vehicle, msg, speed_limit, now)
    if zone == Zone.SAFE:
        vehicle.lane_entry_ban = hazard.lane
    return vehicle


def release(vehicle: VehicleState) -> VehicleState:
    vehicle.force_lc = False
    vehicle.scr_cap = None
    vehicle.gap_control = None
    vehicle.lane_entry_ban = None
    return vehicle


class TcsState:
    """Server memory: tick of each vehicle's last CAM and the latched hazard."""

    def __init__(self, config: TcsConfig, capacity: int = 0):
        self.config = config
        self.last_cam_tick = np.full(capacity, -1, dtype=np.int64)
        self.hazard: Optional[Hazard] = None

    def _grow(self, n: int):
        if n > self.last_cam_tick.size:
            extra = np.full(n - self.last_cam_tick.size, -1, dtype=np.int64)
            self.last_cam_tick = np.concatenate([self.last_cam_tick, extra])

    def latch(self, hazard: Hazard) -> bool:
        if self.hazard is None:
            self.hazard = hazard
            return True
        return False

    def observe(self, tick: int, now: float, ids, pos, lane, acc, emitting,
                crash_events=()) -> Optional[Hazard]:
        """One server cycle over the equipped on-road vehicles.

        Vehicles with ``emitting`` set send a CAM this tick; the others
        (crashed ones) have gone silent. Detection order: hard braking,
        CAM silence, then the ground-truth crash fallback.
        """
        ids = np.asarray(ids, dtype=np.int64)
        emitting = np.asarray(emitting, dtype=bool)
        if ids.size:
            self._grow(int(ids.max()) + 1)
            self.last_cam_tick[ids[emitting]] = tick
        if self.hazard is not None:
            return self.hazard
        cfg = self.config
        if ids.size:
            acc = np.asarray(acc, dtype=float)
            alarm = emitting & (-acc >= cfg.decel_alarm_threshold - 1e-9)
            if alarm.any():
                k = int(np.flatnonzero(alarm)[0])
                self.latch(Hazard(float(pos[k]), int(lane[k]), now, "decel"))
                return self.hazard
            last = self.last_cam_tick[ids]
            silent = ~emitting & (last >= 0) & (tick - last >= cfg.cam_silence_ticks)
            if silent.any():
                k = int(np.flatnonzero(silent)[0])
                self.latch(Hazard(float(pos[k]), int(lane[k]), now, "silence"))
                return self.hazard
        if cfg.ground_truth_detection and crash_events:
            ev = crash_events[0]
            self.latch(Hazard(ev.position, ev.lane, now, "crash"))
        return self.hazard


def detect_hazard(state: TcsState, cams: list, tick: int, silent=(),
                  crash_events=(), now: float = 0.0) -> Optional[Hazard]:
    """CAM-list front end to ``TcsState.observe``.

    ``silent`` lists ``(vehicle, position, lane)`` for equipped vehicles that
    are still on the road but sent no CAM this tick.
    """
    rows = [(c.vehicle, c.position, c.lane, c.acceleration, True) for c in cams]
    rows += [(vid, p, ln, 0.0, False) for vid, p, ln in silent]
    if rows:
        ids, pos, lane, acc, emit = (np.array(col) for col in zip(*rows))
    else:
        ids = pos = lane = acc = emit = np.array([])
    return state.observe(tick, now, ids, pos, lane, acc, emit, crash_events)


def dispatch_messages(vehicles, hazard: Optional[Hazard], config: TcsConfig,
                      speed_limit: float = 30.56, now: float = 0.0) -> list:
    """All messages sent this tick to the given vehicles (equipped recipients only)."""
    if hazard is None or not vehicles:
        return []
    eebl_d = eebl_distance(config, speed_limit)
    zones = classify_zones([v.lane for v in vehicles], [v.position for v in vehicles],
                           hazard.position, hazard.lane, eebl_d, config.rhw_range)
    out = []
    for v, z in zip(vehicles, zones):
        if v.equipped and not v.crashed and v.position <= hazard.position:
            out.extend(messages_for_zone(Zone(int(z)), v.id, hazard, config, now))
    return out
