"""Driver population sampling from clipped normal distributions."""

from __future__ import annotations

import numpy as np

from .config import ClippedNormal, DriverDistributions
from .driver import DriverParams

MAX_REJECTIONS = 10**6


def draw(dist, rng: np.random.Generator) -> float:
    """One draw of a constant or a cut-off Gaussian (rejection sampling)."""
    if not isinstance(dist, ClippedNormal):
        return float(dist)
    if dist.std == 0:
        if not dist.lo <= dist.mean <= dist.hi:
            raise ValueError(f"degenerate distribution {dist} has its mean outside the clip range")
        return float(dist.mean)
    for _ in range(MAX_REJECTIONS):
        x = rng.normal(dist.mean, dist.std)
        if dist.lo <= x <= dist.hi:
            return float(x)
    raise RuntimeError(f"rejection sampling of {dist} exceeded {MAX_REJECTIONS} draws")


def sample_driver(dist: DriverDistributions, rng: np.random.Generator) -> DriverParams:
    # draw order is part of the determinism contract
    sigma = draw(dist.sigma, rng)
    decel = draw(dist.decel, rng)
    accel = draw(dist.accel, rng)
    speed_factor = draw(dist.speed_factor, rng)
    emergency = draw(dist.emergency_decel, rng)
    return DriverParams(
        sigma=sigma,
        tau=draw(dist.tau, rng),
        accel=accel,
        decel=min(decel, emergency),
        emergency_decel=emergency,
        max_speed=draw(dist.max_speed, rng),
        speed_factor=speed_factor,
        action_step_length=draw(dist.action_step_length, rng),
        lc_assertive=draw(dist.lc_assertive, rng),
    )


def sample_population(dist: DriverDistributions, n: int, penetration: float,
                      rng: np.random.Generator, quota: bool = False):
    """Sample ``n`` drivers plus their equipped flags.

    One uniform is drawn per vehicle whatever the penetration, so raising the
    penetration with the same seed equips a superset of vehicles and leaves
    every driver's parameters unchanged.
    """
    drivers = []
    equip_u = np.empty(n)
    for i in range(n):
        drivers.append(sample_driver(dist, rng))
        equip_u[i] = rng.random()
    if quota:
        k = int(round(penetration * n))
        equipped = np.zeros(n, dtype=bool)
        equipped[np.argsort(equip_u, kind="stable")[:k]] = True
    else:
        equipped = equip_u < penetration
    return drivers, equipped
