"""Random walk in random scenery: the clock A(t) = int_0^t z(S_u) du.

Estimators share one batch of walkers across the whole t-grid (each walker
records its clock at every grid point), so estimates at different t are
positively correlated; this is harmless for slope fits, which weight by
per-point errors only.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import sampling, walk
from .scenery import values_at
from .stats import EstimateSeries, EstimatePoint, binomial_point
from .theory import s_exponent

PINNED_MODES = ("indicator", "splice", "factorized")


@dataclass(frozen=True)
class ClockValue:
    t: float
    a: float
    truncated_a: float | None = None


@dataclass(frozen=True)
class ReturnsDiagnostics:
    threshold: float
    returns: tuple
    departures: tuple
    n_t: int
    level_local_time: float


def _sojourns(path, field):
    lo, hi = path.holding_bounds()
    z = values_at(field, path.sites)
    return lo, hi, z


def clock(path, field, checkpoints, cap=None):
    """A(s) along ``path`` for each checkpoint s (and A_M(s) when ``cap`` is set)."""
    cps = [float(c) for c in checkpoints]
    if any(c < 0 or c > path.horizon for c in cps):
        raise ValueError("checkpoint outside [0, horizon]")
    if any(b < a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be sorted")
    if field.dimension != path.dimension:
        raise ValueError("field and path dimensions differ")
    lo, hi, z = _sojourns(path, field)
    out = []
    for s in cps:
        dt = np.clip(hi, None, s) - np.clip(lo, None, s)
        dt = np.maximum(dt, 0.0)
        a = math.fsum(z * dt)
        ta = math.fsum(np.minimum(z, cap) * dt) if cap is not None else None
        out.append(ClockValue(s, a, ta))
    return out


def truncation_deficit(path, field, cap, s):
    """V_M(s) = int_0^s (M - z(S_u) wedge M) du."""
    lo, hi, z = _sojourns(path, field)
    dt = np.maximum(np.clip(hi, None, s) - np.clip(lo, None, s), 0.0)
    return math.fsum((cap - np.minimum(z, cap)) * dt)


def _check_grid(t_grid):
    grid = sorted(float(t) for t in t_grid)
    if not grid or grid[0] <= 0:
        raise ValueError("t_grid must hold positive times")
    return grid


def _check_n(n_samples):
    if n_samples < 1:
        raise ValueError("n_samples must be positive")


def tail_from_batch(batch, rho, grid, seed=None):
    """Unpinned P(A(t) >= t^rho) from a batch recorded at every grid time."""
    pts = []
    for t in grid:
        k = batch.index(t)
        hits = int(np.count_nonzero(batch.clock[:, k] >= t**rho))
        pts.append(binomial_point(t, hits, batch.n))
    return EstimateSeries(pts, {"seed": seed, "rho": rho, "pinned": False, "mode": "indicator"})


def pinned_indicator_from_batch(batch, rho, grid, seed=None):
    pts = []
    for t in grid:
        k = batch.index(t)
        at0 = np.all(batch.position[:, k, :] == 0, axis=1)
        hits = int(np.count_nonzero(at0 & (batch.clock[:, k] >= t**rho)))
        pts.append(binomial_point(t, hits, batch.n))
    return EstimateSeries(pts, {"seed": seed, "rho": rho, "pinned": True, "mode": "indicator"})


def pinned_splice_from_batches(bx, by, rho, grid, seed=None):
    """P(A(t) >= t^rho, S_t = 0) by splicing two batches recorded at t/2."""
    pts = []
    for t in grid:
        kx, ky = bx.index(t / 2), by.index(t / 2)
        r = sampling.splice(bx.clock[:, kx], bx.position[:, kx], by.clock[:, ky], by.position[:, ky],
                            sampling.THRESHOLD, t**rho)
        pts.append(EstimatePoint(t, r.mean, r.stderr, r.n_x, r.pairs, {"n_y": r.n_y}))
    return EstimateSeries(pts, {"seed": seed, "rho": rho, "pinned": True, "mode": "splice"})


def tail_estimate(d, field, rho, t_grid, n_samples, pinned=False, mode="indicator", seed=0):
    """Monte Carlo P_0(A(t) >= t^rho), optionally restricted to {S_t = 0}.

    Parameters
    ----------
    d : int
        Lattice dimension (must match the field).
    rho : float
        Threshold exponent.
    pinned : bool
        Estimate P_0(A(t) >= t^rho, S_t = 0) instead.
    mode : {"indicator", "splice", "factorized"}
        Pinned estimator: raw endpoint indicator, the two-batch splice
        (unbiased, far fewer samples), or the unpinned estimate times
        p_t(0, 0) (approximate; exact only asymptotically).
    seed : int
        Walker seed; the scenery has its own seed.
    """
    _check_n(n_samples)
    if not rho > 0:
        raise ValueError("rho must be positive")
    if field.dimension != d:
        raise ValueError("field dimension differs from d")
    grid = _check_grid(t_grid)
    if pinned and mode not in PINNED_MODES:
        raise ValueError(f"mode must be one of {PINNED_MODES}")
    if pinned and mode == "splice":
        half = [t / 2 for t in grid]
        bx = sampling.run_walkers(field, half, n_samples, seed, stream=1)
        by = sampling.run_walkers(field, half, n_samples, seed, stream=2)
        return pinned_splice_from_batches(bx, by, rho, grid, seed)
    batch = sampling.run_walkers(field, grid, n_samples, seed)
    if not pinned:
        return tail_from_batch(batch, rho, grid, seed)
    if mode == "indicator":
        return pinned_indicator_from_batch(batch, rho, grid, seed)
    un = tail_from_batch(batch, rho, grid, seed)
    pts = []
    for p in un.points:
        q = walk.kernel(d, p.t, [0] * d)
        pts.append(EstimatePoint(p.t, p.estimate * q, p.stderr * q, p.n, p.hits, {"approximate": True}))
    return EstimateSeries(pts, {"seed": seed, "rho": rho, "pinned": True, "mode": "factorized"})


def lower_threshold(d, field, eps, t, variant="power"):
    """t^{s(d,alpha) - eps} or, for ``variant="mean"``, t (E[z] - eps)."""
    if variant == "power":
        s = s_exponent(d, field.alpha)
        if not 0 < eps < s:
            raise ValueError(f"eps must lie in (0, {s})")
        return t ** (s - eps)
    if variant == "mean":
        m = field.mean()
        if not 0 < eps < m:
            raise ValueError(f"eps must lie in (0, {m})")
        return t * (m - eps)
    raise ValueError("variant must be 'power' or 'mean'")


def lower_from_batch(batch, d, field, eps, grid, variant="power", seed=None):
    pts = []
    for t in grid:
        k = batch.index(t)
        thr = lower_threshold(d, field, eps, t, variant)
        hits = int(np.count_nonzero(batch.clock[:, k] <= thr))
        pts.append(binomial_point(t, hits, batch.n, threshold=thr))
    return EstimateSeries(pts, {"seed": seed, "eps": eps, "variant": variant})


def lower_deviation_estimate(d, field, eps, t_grid, n_samples, variant="power", seed=0):
    """Monte Carlo P_0(A(t) <= threshold) with the threshold of :func:`lower_threshold`."""
    _check_n(n_samples)
    grid = _check_grid(t_grid)
    lower_threshold(d, field, eps, grid[0], variant)
    batch = sampling.run_walkers(field, grid, n_samples, seed)
    return lower_from_batch(batch, d, field, eps, grid, variant, seed)


def hitting_from_batch(batch, rho, eps, grid, seed=None):
    pts = []
    for t in grid:
        k = batch.index(t)
        thr = t ** (rho - 5 * eps)
        hits = int(np.count_nonzero(batch.running_max[:, k] >= thr))
        pts.append(binomial_point(t, hits, batch.n, threshold=thr))
    return EstimateSeries(pts, {"seed": seed, "rho": rho, "eps": eps})


def hitting_estimate(d, field, rho, eps, t_grid, n_samples, seed=0):
    """Monte Carlo P_0(the walk visits {z >= t^{rho - 5 eps}} before t).

    Hits are detected online from the running maximum of z along the path,
    so the level set is never enumerated.
    """
    _check_n(n_samples)
    if not rho - 5 * eps > 0:
        raise ValueError("need rho - 5 eps > 0")
    if field.dimension != d:
        raise ValueError("field dimension differs from d")
    grid = _check_grid(t_grid)
    batch = sampling.run_walkers(field, grid, n_samples, seed)
    return hitting_from_batch(batch, rho, eps, grid, seed)


def returns_diagnostics(path, field, level_threshold):
    """Successive entrance (R_k) and exit (D_k) times of the level set {z >= threshold}.

    R_k is the k-th entrance time and D_k the following exit time (inf if
    the path is still inside at the horizon).  N_t counts entrances before t.
    """
    lo, hi, z = _sojourns(path, field)
    inside = z >= level_threshold
    returns, departures = [], []
    for k in range(inside.size):
        if inside[k] and (k == 0 or not inside[k - 1]):
            returns.append(float(lo[k]))
        if not inside[k] and k > 0 and inside[k - 1]:
            departures.append(float(lo[k]))
    if len(departures) < len(returns):
        departures.append(math.inf)
    t = path.horizon
    n_t = sum(1 for r in returns if r < t)
    level = math.fsum(min(dk, t) - min(rk, t) for rk, dk in zip(returns, departures))
    return ReturnsDiagnostics(float(level_threshold), tuple(returns), tuple(departures), n_t, level)


def level_local_time(path, field, level_threshold):
    """Time spent in {z >= threshold}, computed directly from the sojourns."""
    lo, hi, z = _sojourns(path, field)
    return math.fsum((hi - lo)[z >= level_threshold])
