"""Continuous drift-diffusion reference simulator.

Integrates ``dX = mu dt + sigma dB`` by Euler-Maruyama on a uniform grid,
with boundaries that may collapse as ``A(t) = A(0) exp(-decay t)``.
Crossings are detected at grid points only, so hit times carry an
``O(sqrt(dt))`` overshoot bias.

With constant coefficients the Euler-Maruyama recursion sums exactly to
``X_k = x0 + mu t_k + sigma sqrt(dt) (xi_1 + ... + xi_k)``, which is how paths
are evaluated here; a ``sigma = 0`` path is therefore exactly linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import BoundaryPair
from .errors import InvalidConfig

DEFAULT_DT = 1e-3
_BLOCK = 2048
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass(frozen=True)
class ProcessParams:
    mu: float
    sigma: float = 1.0
    dt: float = DEFAULT_DT
    x0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidConfig(f"dt must be > 0, got {self.dt}")
        if not self.sigma >= 0:
            raise InvalidConfig(f"sigma must be >= 0, got {self.sigma}")


@dataclass
class DDMPath:
    times: np.ndarray
    values: np.ndarray
    hit: str  # "upper", "lower" or "none"
    hit_time: Optional[float] = None


@dataclass
class FirstPassageSummary:
    n_paths: int
    p_upper: float
    p_lower: float
    p_none: float
    mean_hit_time: float
    hit_time_quantiles: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "p_upper": self.p_upper,
            "p_lower": self.p_lower,
            "p_none": self.p_none,
            "mean_hit_time": self.mean_hit_time,
            "hit_time_quantiles": dict(self.hit_time_quantiles),
        }


def _check(boundaries, decay, max_time):
    if not isinstance(boundaries, BoundaryPair):
        boundaries = BoundaryPair(*boundaries)
    if not decay >= 0:
        raise InvalidConfig(f"decay must be >= 0, got {decay}")
    if not max_time > 0:
        raise InvalidConfig(f"max_time must be > 0, got {max_time}")
    return boundaries


def _n_steps(max_time, dt):
    return int(math.floor(max_time / dt + 1e-9))


def boundary_at(boundaries: BoundaryPair, decay: float, t):
    f = np.exp(-decay * np.asarray(t, dtype=float))
    return boundaries.upper * f, boundaries.lower * f


def simulate_path(params: ProcessParams, boundaries, decay: float, max_time: float, rng=None) -> DDMPath:
    """Simulate one path until it touches a boundary or ``max_time`` passes."""
    b = _check(boundaries, decay, max_time)
    rng = np.random.default_rng(rng)
    dt, n = params.dt, _n_steps(max_time, params.dt)
    scale = params.sigma * math.sqrt(dt)

    times_parts, value_parts = [], []
    noise = 0.0
    start = 0  # grid index of the first point in the current block
    while start <= n:
        stop = min(start + _BLOCK, n + 1)
        k = np.arange(start, stop)
        t = k * dt
        xi = rng.standard_normal(stop - start)
        if start == 0:
            xi[0] = 0.0  # X(0) = x0
        csum = noise + np.cumsum(xi)
        noise = float(csum[-1])
        x = params.x0 + params.mu * t + scale * csum
        up, lo = boundary_at(b, decay, t)
        crossed = (x >= up) | (x <= lo)
        if crossed.any():
            i = int(np.argmax(crossed))
            times_parts.append(t[: i + 1])
            value_parts.append(x[: i + 1])
            hit = "upper" if x[i] >= up[i] else "lower"
            return DDMPath(np.concatenate(times_parts), np.concatenate(value_parts), hit, float(t[i]))
        times_parts.append(t)
        value_parts.append(x)
        start = stop
    return DDMPath(np.concatenate(times_parts), np.concatenate(value_parts), "none", None)


def first_passage_times(params: ProcessParams, boundaries, decay: float, n_paths: int,
                        rng=None, max_time: float = 10.0):
    """Vectorised first-passage simulation.

    Returns ``(hit, hit_time)`` arrays: ``hit`` is +1 (upper), -1 (lower) or
    0 (no contact before ``max_time``); ``hit_time`` is NaN where ``hit == 0``.
    """
    b = _check(boundaries, decay, max_time)
    if n_paths < 1:
        raise InvalidConfig(f"n_paths must be >= 1, got {n_paths}")
    rng = np.random.default_rng(rng)
    dt, n = params.dt, _n_steps(max_time, params.dt)
    scale = params.sigma * math.sqrt(dt)

    hit = np.zeros(n_paths, dtype=np.int8)
    hit_time = np.full(n_paths, np.nan)
    noise = np.zeros(n_paths)
    active = np.arange(n_paths)

    # t = 0
    x0 = params.x0
    if x0 >= b.upper or x0 <= b.lower:
        hit[:] = 1 if x0 >= b.upper else -1
        hit_time[:] = 0.0
        return hit, hit_time

    start = 1
    while start <= n and active.size:
        stop = min(start + _BLOCK, n + 1)
        t = np.arange(start, stop) * dt
        xi = rng.standard_normal((active.size, stop - start))
        csum = noise[active, None] + np.cumsum(xi, axis=1)
        x = x0 + params.mu * t[None, :] + scale * csum
        up, lo = boundary_at(b, decay, t)
        upper_hit = x >= up[None, :]
        lower_hit = x <= lo[None, :]
        crossed = upper_hit | lower_hit
        any_cross = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)

        done = active[any_cross]
        fi = first[any_cross]
        rows = np.nonzero(any_cross)[0]
        hit[done] = np.where(upper_hit[rows, fi], 1, -1)
        hit_time[done] = t[fi]

        noise[active] = csum[:, -1]
        active = active[~any_cross]
        start = stop
    return hit, hit_time


def first_passage_stats(params: ProcessParams, boundaries, decay: float, n_paths: int,
                        rng=None, max_time: float = 10.0) -> FirstPassageSummary:
    hit, ht = first_passage_times(params, boundaries, decay, n_paths, rng, max_time)
    n = float(n_paths)
    reached = ht[~np.isnan(ht)]
    if reached.size:
        mean = float(reached.mean())
        qs = {str(q): float(v) for q, v in zip(QUANTILES, np.quantile(reached, QUANTILES))}
    else:
        mean = float("nan")
        qs = {str(q): float("nan") for q in QUANTILES}
    return FirstPassageSummary(
        n_paths=n_paths,
        p_upper=float(np.count_nonzero(hit == 1)) / n,
        p_lower=float(np.count_nonzero(hit == -1)) / n,
        p_none=float(np.count_nonzero(hit == 0)) / n,
        mean_hit_time=mean,
        hit_time_quantiles=qs,
    )


def hit_probability(mu: float, sigma: float, upper: float, lower: float, x0: float = 0.0) -> float:
    """Probability that a Wiener process with drift exits through ``upper``
    before ``lower`` (constant boundaries, continuous monitoring)."""
    if not lower < x0 < upper:
        raise InvalidConfig("x0 must lie strictly between the boundaries")
    if sigma == 0:
        return 1.0 if mu > 0 else (0.0 if mu < 0 else float("nan"))
    if mu == 0:
        return (x0 - lower) / (upper - lower)
    k = 2.0 * mu / sigma**2
    # expm1 keeps precision when k * width is small
    return math.expm1(-k * (x0 - lower)) / math.expm1(-k * (upper - lower))
