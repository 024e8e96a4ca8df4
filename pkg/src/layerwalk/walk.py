"""Continuous-time simple random walk on Z^d.

The walk jumps to each of its 2d neighbours at rate one.  Paths keep their
jump times because the clock A(t) is a functional of the whole trajectory.
Transition probabilities are products of scaled Bessel functions, computed
on the log scale so that elapsed times up to ~1e12 are harmless.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import _engine
from .bessel import log_ive
from .rng import stream_key
from .scenery import constant_field


def _key(stream):
    if isinstance(stream, (tuple, list)):
        return np.uint64(stream_key(*stream))
    return np.uint64(stream_key(int(stream)))


@dataclass(frozen=True)
class WalkPath:
    """Trajectory on [0, horizon].

    ``sites[k]`` is occupied on [jump_times[k-1], jump_times[k]) with the
    conventions jump_times[-1] = 0 and jump_times[n] = horizon.
    """

    dimension: int
    horizon: float
    jump_times: np.ndarray
    sites: np.ndarray
    start: tuple

    @property
    def n_jumps(self):
        return int(self.jump_times.size)

    @property
    def endpoint(self):
        return tuple(int(c) for c in self.sites[-1])

    def holding_bounds(self):
        """Start and end time of each sojourn, aligned with ``sites``."""
        lo = np.concatenate(([0.0], self.jump_times))
        hi = np.concatenate((self.jump_times, [self.horizon]))
        return lo, hi

    @classmethod
    def from_jumps(cls, start, jumps, horizon):
        """Build a path from ``[(time, site), ...]``; handy for hand-made tests."""
        start = tuple(int(c) for c in start)
        times = np.array([float(u) for u, _ in jumps])
        sites = np.array([start] + [tuple(s) for _, s in jumps], dtype=np.int64).reshape(-1, len(start))
        if np.any(np.diff(times) <= 0) or (times.size and (times[0] <= 0 or times[-1] > horizon)):
            raise ValueError("jump times must increase within (0, horizon]")
        if np.any(np.abs(np.diff(sites, axis=0)).sum(axis=1) != 1):
            raise ValueError("consecutive sites must be lattice neighbours")
        return cls(len(start), float(horizon), times, sites, start)


@dataclass(frozen=True)
class OccupationMeasure:
    local_times: dict
    total: float

    def __getitem__(self, x):
        return self.local_times.get(tuple(x), 0.0)

    @property
    def support(self):
        return set(self.local_times)


def simulate_path(d, t, stream, start=None, max_jumps=None):
    """Exact path of the rate-1-per-neighbour walk up to time ``t``.

    ``stream`` is an integer seed or a tuple of integer ids; the same stream
    always gives the same path.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if t < 0:
        raise ValueError("horizon must be nonnegative")
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64).reshape(d)
    if max_jumps is None:
        mean = 2.0 * d * t
        max_jumps = int(mean + 12.0 * math.sqrt(mean) + 64)
    times, sites, n = _engine.walk_path(d, float(t), _key(stream), start, max_jumps)
    if n < 0:
        raise RuntimeError(f"path exceeded {max_jumps} jumps")
    return WalkPath(d, float(t), times.copy(), sites.copy(), tuple(int(c) for c in start))


def occupation(path):
    """Local time at every visited site; the values sum to the horizon."""
    lo, hi = path.holding_bounds()
    acc = {}
    for site, a, b in zip(map(tuple, path.sites.tolist()), lo, hi):
        acc.setdefault(site, []).append(b - a)
    local = {x: math.fsum(v) for x, v in acc.items()}
    return OccupationMeasure(local, path.horizon)


def range_size(path):
    """Number of distinct visited sites."""
    return int(np.unique(path.sites, axis=0).shape[0])


def log_kernel(d, t, x, rate=1.0):
    """log p_t(0, x) for the walk with per-direction rate ``rate``.

    ``x`` may be a single point or an array of points (last axis = d).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not rate > 0:
        raise ValueError("rate must be positive")
    x = np.asarray(x, dtype=np.int64)
    if x.shape[-1:] != (d,):
        raise ValueError(f"target must have {d} coordinates")
    terms = log_ive(np.abs(x), 2.0 * rate * t)
    out = np.sum(terms, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def kernel(d, t, x, rate=1.0):
    """p_t(0, x) = prod_i e^{-2 rate t} I_{x_i}(2 rate t)."""
    return np.exp(log_kernel(d, t, x, rate)) if np.ndim(x) > 1 else math.exp(log_kernel(d, t, x, rate))


def marginal_pmf(t, radius, rate=1.0):
    """One-coordinate law on {-radius..radius}; index j holds site j - radius."""
    k = np.arange(-radius, radius + 1)
    return np.exp(log_ive(np.abs(k), 2.0 * rate * t))


def killed_expansion(x, radius):
    """Eigen-expansion of the 1-d walk killed on leaving {-radius..radius}.

    Returns ``(lam, coef)`` with q_s(0, x) = sum_k coef_k exp(lam_k s).
    """
    if abs(x) > radius:
        return np.zeros(0), np.zeros(0)
    m = 2 * radius + 2
    k = np.arange(1, m)
    lam = -2.0 + 2.0 * np.cos(k * np.pi / m)
    coef = (2.0 / m) * np.sin(k * np.pi * (radius + 1) / m) * np.sin(k * np.pi * (x + radius + 1) / m)
    return lam, coef


def killed_kernel(s, x, radius):
    """q_s(0, x) for the 1-d walk killed outside {-radius..radius}."""
    lam, coef = killed_expansion(x, radius)
    s = np.asarray(s, dtype=float)
    out = np.exp(np.multiply.outer(s, lam)) @ coef
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def sample_endpoints(d, t, n, seed, start=None):
    """Endpoints S_t of ``n`` independent walks (walker i uses stream (seed, i))."""
    field = constant_field(1.0, d)
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    cps = np.array([float(t)])
    a = np.empty((n, 1))
    pos = np.empty((n, 1, d), dtype=np.int64)
    mx = np.empty((n, 1))
    alive = np.empty((n, 1), dtype=np.bool_)
    jumps = np.empty((n, 1), dtype=np.int64)
    _engine.walk_batch(d, *field.kernel_args(), np.uint64(stream_key(seed)), 0, start, cps, -1,
                       a, pos, mx, alive, jumps)
    return pos[:, 0, :], jumps[:, 0]


def fit_envelope(ts, fractions):
    """Fit c1..c4 with c1 t^-1/2 e^{-c2 x^2/t} <= p_t(0,x) <= c3 t^-1/2 e^{-c4 x^2/t}.

    The grid is {(t, round(f t)) : t in ts, f in fractions}, restricted to
    |x| <= t.  Constants carry a 10% safety margin.
    """
    pts = [(t, int(round(f * t))) for t in ts for f in fractions if abs(round(f * t)) <= t]
    t_arr = np.array([p[0] for p in pts], dtype=float)
    x_arr = np.array([p[1] for p in pts], dtype=np.int64)
    g = np.array([log_kernel(1, t, [x]) for t, x in zip(t_arr, x_arr)]) + 0.5 * np.log(t_arr)
    u = x_arr.astype(float) ** 2 / t_arr
    on = u == 0
    log_c3 = g[on].max() + math.log(1.1)
    log_c1 = g[on].min() - math.log(1.1)
    off = ~on
    c4 = np.min((log_c3 - g[off]) / u[off]) / 1.1
    c2 = np.max((log_c1 - g[off]) / u[off]) * 1.1
    return math.exp(log_c1), float(c2), math.exp(log_c3), float(c4)


def envelope_holds(consts, ts, fractions):
    c1, c2, c3, c4 = consts
    for t in ts:
        for f in fractions:
            x = int(round(f * t))
            if abs(x) > t:
                continue
            p = kernel(1, t, [x])
            lo = c1 / math.sqrt(t) * math.exp(-c2 * x * x / t)
            hi = c3 / math.sqrt(t) * math.exp(-c4 * x * x / t)
            if not lo <= p <= hi:
                return False
    return True


def self_check():
    """Kernel self-tests; returns a list of (name, passed, detail)."""
    out = []
    v = kernel(1, 1.0, [0])
    ref = math.exp(-2.0) * sum(1.0 / math.factorial(k) ** 2 for k in range(30))
    out.append(("value d=1 t=1 x=0", abs(v - ref) <= 1e-14, f"{v:.15g} vs {ref:.15g}"))
    r = np.arange(-60, 61)
    grid = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    tot = float(np.sum(kernel(2, 3.0, grid)))
    out.append(("normalization d=2 t=3", abs(tot - 1) <= 1e-10, f"sum = {tot:.15g}"))
    s, t, x = 0.7, 1.3, 3
    ys = np.arange(-80, 81)
    ck = float(np.sum(kernel(1, s, ys[:, None]) * kernel(1, t, (x - ys)[:, None])))
    direct = kernel(1, s + t, [x])
    out.append(("Chapman-Kolmogorov d=1", abs(ck - direct) <= 1e-9, f"{ck:.12g} vs {direct:.12g}"))
    lclt = math.sqrt(1e4) * kernel(1, 1e4, [0]) * math.sqrt(4 * math.pi)
    out.append(("local CLT t=1e4", abs(lclt - 1) <= 0.01, f"ratio {lclt:.6f}"))
    big = kernel(1, 1e12, [0])
    out.append(("huge time finite", 0 < big < 1, f"p = {big:.6g}"))
    return out
