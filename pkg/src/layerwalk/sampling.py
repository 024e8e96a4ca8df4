"""Walker batches with checkpoints, and the splice estimator for pinned targets.

Splice
------
Split [0, t] at t/2.  By reversibility of the walk with respect to counting
measure, a path from 0 pinned at S_t = x is the concatenation of a walk
from 0 and a time-reversed walk from x that meet at time t/2.  With
independent batches X (from 0) and Y (from x) run to t/2,

    E_0[F(A(t)); S_t = x] = E[ F(A_X + A_Y) ; X_{t/2} = Y_{t/2} ],

and averaging over all N*M pairs gives an unbiased two-sample U-statistic.
The number of usable pairs grows like N*M*p_t(0, x) instead of N*p_t(0, x).
"""

from dataclasses import dataclass
import math

import numpy as np

from . import _engine
from .rng import stream_key


@dataclass
class WalkerBatch:
    """Per-walker records at each checkpoint; arrays are indexed [walker, checkpoint]."""

    checkpoints: np.ndarray
    clock: np.ndarray
    position: np.ndarray
    running_max: np.ndarray
    alive: np.ndarray
    jumps: np.ndarray

    @property
    def n(self):
        return self.clock.shape[0]

    def index(self, t):
        k = int(np.searchsorted(self.checkpoints, t))
        if k >= self.checkpoints.size or self.checkpoints[k] != t:
            raise KeyError(f"{t} is not a checkpoint")
        return k

    def subset(self, m):
        return WalkerBatch(self.checkpoints, self.clock[:m], self.position[:m], self.running_max[:m],
                           self.alive[:m], self.jumps[:m])


def run_walkers(field, checkpoints, n, seed, start=None, kill=-1, stream=0):
    """Simulate ``n`` walkers of the RWRS on ``field`` to the last checkpoint.

    Walker i draws from the stream derived from (seed, stream) and i, so
    the first m walkers of a batch of size n equal a batch of size m.
    ``kill`` >= 0 records whether the walk stayed in [-kill, kill]^d.
    """
    if n < 1:
        raise ValueError("need at least one walker")
    cps = np.asarray(sorted(float(c) for c in checkpoints))
    if cps.size == 0 or cps[0] < 0:
        raise ValueError("checkpoints must be nonnegative and nonempty")
    d = field.dimension
    start = np.zeros(d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64).reshape(d)
    k = cps.size
    clock = np.empty((n, k))
    pos = np.empty((n, k, d), dtype=np.int64)
    mx = np.empty((n, k))
    alive = np.empty((n, k), dtype=np.bool_)
    jumps = np.empty((n, k), dtype=np.int64)
    _engine.walk_batch(d, *field.kernel_args(), np.uint64(stream_key(seed, stream)), 0, start, cps, int(kill),
                       clock, pos, mx, alive, jumps)
    return WalkerBatch(cps, clock, pos, mx, alive, jumps)


def endpoint_keys(pos):
    pos = np.ascontiguousarray(pos, dtype=np.int64)
    return _engine.pack_rows(pos, pos.shape[1])


@dataclass
class SpliceResult:
    mean: float
    stderr: float
    pairs: int
    n_x: int
    n_y: int


THRESHOLD, FREE_KERNEL, KILLED_KERNEL = 0, 1, 2


def splice(a_x, pos_x, a_y, pos_y, mode=THRESHOLD, threshold=0.0, x1=None, killed=None, mask_x=None, mask_y=None):
    """Two-sample U-statistic over coinciding endpoints.

    ``mode`` selects h(a) = 1{a >= threshold}, the free d1-dimensional
    kernel p_a(0, x1), or the killed one-dimensional kernel described by
    ``killed = (lam, coef)``.  Masked-out walkers contribute zero.
    The standard error is the first-order (Hoeffding) variance
    var(h1)/N + var(h2)/M, which is conservative for small overlaps.
    """
    n, m = a_x.size, a_y.size
    ix = np.arange(n) if mask_x is None else np.flatnonzero(mask_x)
    iy = np.arange(m) if mask_y is None else np.flatnonzero(mask_y)
    x1 = np.zeros(1, dtype=np.int64) if x1 is None else np.asarray(x1, dtype=np.int64).reshape(-1)
    lam, coef = killed if killed is not None else (np.zeros(0), np.zeros(0))
    g1 = np.zeros(ix.size)
    g2 = np.zeros(iy.size)
    total, pairs = _engine.splice_join(endpoint_keys(pos_x[ix]), np.ascontiguousarray(a_x[ix], dtype=float),
                                       endpoint_keys(pos_y[iy]), np.ascontiguousarray(a_y[iy], dtype=float),
                                       int(mode), float(threshold), x1, np.asarray(lam, dtype=float),
                                       np.asarray(coef, dtype=float), g1, g2)
    h1 = np.zeros(n)
    h2 = np.zeros(m)
    h1[ix] = g1
    h2[iy] = g2
    mean = total / (n * m)
    var = 0.0
    if n > 1:
        var += np.var(h1 / m, ddof=1) / n
    if m > 1:
        var += np.var(h2 / n, ddof=1) / m
    return SpliceResult(float(mean), float(math.sqrt(var)), int(pairs), n, m)
