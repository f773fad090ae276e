"""Longitudinal driver behaviour.

Krauss-family safe speed with dawdling, SCR speed caps, the EEBL gap-control
overlay and Euler integration with braking clamps. The array kernels
(``plan_targets``, ``integrate_speeds``, ``effective_tau``) are what the
engine calls every tick; the scalar functions wrap them for single vehicles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class DriverParams:
    sigma: float = 0.2
    tau: float = 2.0
    accel: float = 2.0
    decel: float = 3.5
    emergency_decel: float = 4.5
    max_speed: float = 30.5
    speed_factor: float = 1.1
    action_step_length: float = 0.9
    lc_assertive: float = 1.3

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not 0 < self.decel <= self.emergency_decel:
            raise ValueError("need 0 < decel <= emergency_decel")
        if self.accel <= 0 or self.tau <= 0 or self.action_step_length <= 0:
            raise ValueError("accel, tau and action_step_length must be positive")


@dataclass(frozen=True)
class GapControlState:
    target_time_headway: float = 4.0
    target_space_headway: float = 2.0
    duration: float = -1.0  # -1: never expires
    change_rate: float = 0.5  # headway seconds gained per second
    max_decel: float = 1.5
    start_time: float = 0.0

    def active(self, now: float) -> bool:
        return self.duration < 0 or now < self.start_time + self.duration


@dataclass
class VehicleState:
    """Standalone record of one vehicle; the engine keeps the same fields in arrays."""

    id: int
    lane: int
    position: float
    speed: float
    driver: DriverParams = DriverParams()
    acceleration: float = 0.0
    length: float = 5.0
    min_gap: float = 2.5
    equipped: bool = False
    crashed: bool = False
    zone: str = "Standard"
    gap_control: Optional[GapControlState] = None
    scr_cap: Optional[float] = None
    force_lc: bool = False
    lane_entry_ban: Optional[int] = None
    next_decision_time: float = 0.0
    stopped: bool = False  # staged stop, immobile

    @property
    def rear(self) -> float:
        return self.position - self.length


def krauss_safe_speed(v_follower, v_leader, gap, tau_eff, b):
    """Largest speed from which the follower can still stop behind a braking leader.

    Works element-wise on arrays. The result may be negative; callers clamp.
    """
    if np.ndim(v_follower) == 0 and np.ndim(gap) == 0:
        vals = (v_follower, v_leader, gap, tau_eff, b)
        if not all(math.isfinite(x) for x in vals):
            raise ValueError(f"non-finite input to krauss_safe_speed: {vals}")
        if gap < 0 or tau_eff <= 0 or b <= 0:
            raise ValueError("krauss_safe_speed needs gap >= 0, tau > 0, b > 0")
    return v_leader + (gap - v_leader * tau_eff) / ((v_leader + v_follower) / (2.0 * b) + tau_eff)


def _safe_speed(vf, vl, gap, tau, b):
    return vl + (gap - vl * tau) / ((vl + vf) / (2.0 * b) + tau)


def effective_tau(base_tau, target_tau, change_rate, elapsed):
    """Linear headway ramp from the driver's tau towards the gap-control target."""
    return np.minimum(target_tau, base_tau + change_rate * np.maximum(elapsed, 0.0))


def update_gap_control(state: Optional[GapControlState], now: float, base_tau: float):
    """Return ``(effective_tau, max_decel)`` for a driver at time ``now``.

    ``max_decel`` is None when no gap control is running.
    """
    if state is None or not state.active(now):
        return base_tau, None
    tau = float(effective_tau(base_tau, state.target_time_headway, state.change_rate,
                              now - state.start_time))
    return tau, state.max_decel


def plan_targets(v, desired, accel, decel, emergency, step, sigma, tau, u,
                 has_leader, v_leader, gap,
                 gc_active=None, tau_eff=None, gc_max_decel=1.5):
    """Plan target speeds for a batch of deciding vehicles.

    ``gap`` is the net car-following gap (bumper gap minus standstill spacing).
    Returns ``(target, brake_limit)``. ``brake_limit`` bounds the
    deceleration towards the target: ``emergency`` when the safe speed lies
    below what comfortable braking reaches within the action step,
    ``gc_max_decel`` while a gap-control driver opens its gap voluntarily,
    ``decel`` otherwise.
    """
    v = np.asarray(v, dtype=float)
    free = np.minimum(desired, v + accel * step)
    g = np.maximum(gap, 0.0)
    safe_base = np.where(has_leader, np.maximum(0.0, _safe_speed(v, v_leader, g, tau, decel)),
                         np.inf)
    v_base = np.minimum(free, safe_base)
    # comfortable braking unless the safe speed demands more
    urgent = safe_base < v - decel * step
    brake = np.where(urgent, emergency, np.broadcast_to(decel, v.shape)).astype(float)
    if gc_active is not None and np.any(gc_active):
        safe_eff = np.where(has_leader,
                            np.maximum(0.0, _safe_speed(v, v_leader, g, tau_eff, decel)),
                            np.inf)
        v_gc = np.maximum(safe_eff, v - gc_max_decel * step)
        v_det = np.where(gc_active, np.minimum(v_base, v_gc), v_base)
        opening = gc_active & (v_gc <= v_base) & (v_det < v)
        brake = np.where(opening, gc_max_decel, brake)
    else:
        v_det = v_base
    target = np.maximum(0.0, v_det - sigma * accel * step * u)
    return target, brake


def integrate_speeds(v, target, accel, brake_limit, dt, remaining=None):
    """One Euler step towards the target speed.

    The speed moves at the constant rate that reaches ``target`` when the
    current action step ends (``remaining`` seconds from now), bounded by
    ``accel`` and ``brake_limit``. With ``remaining == dt`` this is
    ``clip(target, v - brake_limit*dt, v + accel*dt)``.
    """
    if remaining is None:
        remaining = dt
    rate = np.clip((target - v) / remaining, -brake_limit, accel)
    v_new = v + rate * dt
    # no overshoot past the target from rounding
    v_new = np.where(rate < 0, np.maximum(v_new, target), np.minimum(v_new, target))
    return np.maximum(0.0, v_new)


def desired_speed(driver: DriverParams, speed_limit: float, scr_cap: Optional[float] = None):
    d = min(driver.speed_factor * speed_limit, driver.max_speed)
    if scr_cap is not None:
        d = min(d, scr_cap)
    return d


def net_gap(follower: VehicleState, leader: VehicleState,
            gap_control: Optional[GapControlState] = None) -> float:
    gap = leader.rear - follower.position - follower.min_gap
    if gap_control is not None:
        gap -= max(0.0, gap_control.target_space_headway - follower.min_gap)
    return gap


def plan_speed(vehicle: VehicleState, leader: Optional[VehicleState], rng,
               speed_limit: float = 30.56, now: float = 0.0) -> float:
    """Target speed chosen by ``vehicle`` at one of its decision times."""
    d = vehicle.driver
    tau_eff, max_decel = update_gap_control(vehicle.gap_control, now, d.tau)
    gc = max_decel is not None
    u = rng.random()
    gap = net_gap(vehicle, leader, vehicle.gap_control if gc else None) if leader else 0.0
    target, _ = plan_targets(
        np.array([vehicle.speed]), desired_speed(d, speed_limit, vehicle.scr_cap),
        d.accel, d.decel, d.emergency_decel, d.action_step_length, d.sigma, d.tau, u,
        leader is not None, leader.speed if leader else 0.0, gap,
        gc_active=np.array([gc]), tau_eff=tau_eff, gc_max_decel=max_decel or 0.0,
    )
    return float(target[0])


def apply_scr(vehicle: VehicleState, factor: float, speed_limit: float) -> VehicleState:
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"SCR factor must lie in (0, 1], got {factor}")
    vehicle.scr_cap = factor * speed_limit
    return vehicle


def integrate(vehicle: VehicleState, target_speed: float, dt: float,
              brake_limit: Optional[float] = None,
              remaining: Optional[float] = None) -> VehicleState:
    if vehicle.crashed or vehicle.stopped:
        return vehicle
    d = vehicle.driver
    brake = d.emergency_decel if brake_limit is None else brake_limit
    v_new = float(integrate_speeds(vehicle.speed, target_speed, d.accel, brake, dt,
                                   remaining))
    vehicle.acceleration = (v_new - vehicle.speed) / dt
    vehicle.speed = v_new
    vehicle.position += v_new * dt
    return vehicle


def with_driver(vehicle: VehicleState, **changes) -> VehicleState:
    vehicle.driver = replace(vehicle.driver, **changes)
    return vehicle
