"""Random walk among layered conductances on Z^{d1+d2}.

Conductances are z(x2) on the d1 layer directions and 1 on the d2 others.
Given the second coordinate S2 (a plain walk), the first coordinate is a
plain walk run at the clock A2(t) = int_0^t z(S2_u) du.  Kernel estimators
exploit this: they simulate S2 only and average the exact first-coordinate
kernel p_{A2(t)}(0, x1) over S2-paths ending at x2.
"""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from . import _engine, sampling, walk
from .bessel import log_ive
from .rng import stream_key
from .scenery import z_at
from .stats import EstimatePoint, EstimateSeries, mean_point
from .theory import OutOfRegime, is_transient, ondiag_exponent

MODES = ("RaoBlackwell", "DirectGillespie", "Factorized")
PINNINGS = ("indicator", "splice", "auto")


@dataclass(frozen=True)
class LayeredModel:
    d1: int
    d2: int
    field: object

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("d1 and d2 must be positive")
        if self.field.dimension != self.d2:
            raise ValueError("scenery dimension must equal d2")

    @property
    def dimension(self):
        return self.d1 + self.d2

    def conductance(self, x, i):
        """Conductance of the edge x -- x + e_i (i is 0-based)."""
        x = tuple(x)
        return z_at(self.field, x[self.d1:]) if i < self.d1 else 1.0

    def exit_rate(self, x2):
        return 2.0 * self.d1 * z_at(self.field, x2) + 2.0 * self.d2


@dataclass
class KernelEstimate:
    t: float
    target: tuple
    mean: float
    stderr: float
    n: int
    mode: str
    hits: int = 0
    pinning: str = "indicator"

    def point(self):
        return EstimatePoint(self.t, self.mean, self.stderr, self.n, self.hits,
                             {"mode": self.mode, "target": [list(self.target[0]), list(self.target[1])],
                              "pinning": self.pinning})


def _stream_key(rng):
    if isinstance(rng, (tuple, list)):
        return np.uint64(stream_key(*rng))
    return np.uint64(stream_key(int(rng)))


def _split_target(model, target):
    x1, x2 = target
    x1 = np.asarray(x1, dtype=np.int64).reshape(-1)
    x2 = np.asarray(x2, dtype=np.int64).reshape(-1)
    if x1.size != model.d1 or x2.size != model.d2:
        raise ValueError(f"target must be (x1 in Z^{model.d1}, x2 in Z^{model.d2})")
    return x1, x2


def _check_t(t):
    if t < 0:
        raise ValueError("time must be nonnegative")


# -- samplers ----------------------------------------------------------------

def timechange_samples(model, t, n, seed, stream=0):
    """n exact samples of X_t via the clock of the second coordinate.

    Returns (x1, x2, clock) with shapes (n, d1), (n, d2), (n,).
    """
    _check_t(t)
    x1 = np.empty((n, model.d1), dtype=np.int64)
    x2 = np.empty((n, model.d2), dtype=np.int64)
    a = np.empty(n)
    _engine.timechange_batch(model.d1, model.d2, *model.field.kernel_args(), np.uint64(stream_key(seed, stream)), 0,
                             float(t), x1, x2, a)
    return x1, x2, a


def gillespie_samples(model, t, n, seed, stream=0):
    """n event-driven samples of X_t; returns (x1, x2, event counts)."""
    _check_t(t)
    x1 = np.empty((n, model.d1), dtype=np.int64)
    x2 = np.empty((n, model.d2), dtype=np.int64)
    ev = np.empty(n, dtype=np.int64)
    _engine.gillespie_batch(model.d1, model.d2, *model.field.kernel_args(), np.uint64(stream_key(seed, stream)), 0,
                            float(t), x1, x2, ev)
    return x1, x2, ev


def csrw_samples(model, t, n, seed, stream=0):
    """n samples of the constant-speed walk Y_t.

    Returns (x1, x2, binv, clock): B^{-1}(t) and A2(B^{-1}(t)) per sample,
    where B(s) = 2 d1 A2(s) + 2 d2 s.
    """
    _check_t(t)
    x1 = np.empty((n, model.d1), dtype=np.int64)
    x2 = np.empty((n, model.d2), dtype=np.int64)
    binv = np.empty(n)
    a = np.empty(n)
    _engine.csrw_batch(model.d1, model.d2, *model.field.kernel_args(), np.uint64(stream_key(seed, stream)), 0,
                       float(t), x1, x2, binv, a)
    return x1, x2, binv, a


def _single(sampler, model, t, rng):
    key = _stream_key(rng)
    out = sampler(model, t, 1, int(key))
    return tuple(int(c) for c in out[0][0]), tuple(int(c) for c in out[1][0])


def sample_timechange(model, t, rng):
    """One exact sample (x1, x2) of X_t."""
    return _single(timechange_samples, model, t, rng)


def direct_gillespie(model, t, rng):
    """One sample (x1, x2) of X_t by direct event-driven simulation."""
    return _single(gillespie_samples, model, t, rng)


def csrw_timechange(model, t, rng):
    """One sample (x1, x2) of the constant-speed walk Y_t = X_{B^{-1}(t)}."""
    return _single(lambda m, tt, n, s: csrw_samples(m, tt, n, s)[:2], model, t, rng)


# -- kernel estimation ---------------------------------------------------------

def _first_kernel(model, a, x1, kill=None):
    """p_a(0, x1) for an array of elapsed times (killed 1-d kernel if ``kill`` is set)."""
    if kill is not None:
        if model.d1 != 1:
            raise ValueError("box killing is implemented for d1 = 1")
        return walk.killed_kernel(a, int(x1[0]), kill)
    lk = np.zeros(a.shape)
    for c in x1:
        lk = lk + log_ive(np.full(a.shape, abs(int(c)), dtype=np.int64), 2.0 * a)
    return np.exp(lk)


def _free_proxy(model, t, x2):
    """Rough P(S2_t = x2) used only to choose between estimators."""
    return walk.kernel(model.d2, t, x2)


def _pinned_values(model, t, x1, x2, fwd, bwd, pinning, kill=None, max_pairs=5_000_000):
    """Estimate E[p_{A2(t)}(0, x1); S2_t = x2] (killed variant when ``kill`` is set)."""
    if pinning == "indicator":
        k = fwd.index(t)
        a = fwd.clock[:, k]
        match = np.all(fwd.position[:, k, :] == x2, axis=1)
        if kill is not None:
            match &= fwd.alive[:, k]
        vals = np.zeros(fwd.n)
        if match.any():
            vals[match] = _first_kernel(model, a[match], x1, kill)
        p = mean_point(t, vals, hits=int(match.sum()))
        return p.estimate, p.stderr, fwd.n, p.hits
    kx, ky = fwd.index(t / 2), bwd.index(t / 2)
    m = bwd.n
    expected = fwd.n * m * _free_proxy(model, t, x2)
    if expected > max_pairs:
        m = max(2, int(m * max_pairs / expected))
    pos_y = bwd.position[:m, ky]
    if kill is not None:
        mode = sampling.KILLED_KERNEL
        killed = walk.killed_expansion(int(x1[0]), kill)
        mask_x, mask_y = fwd.alive[:, kx], bwd.alive[:m, ky]
    else:
        mode, killed, mask_x, mask_y = sampling.FREE_KERNEL, None, None, None
    r = sampling.splice(fwd.clock[:, kx], fwd.position[:, kx], bwd.clock[:m, ky], pos_y, mode, 0.0, x1, killed,
                        mask_x, mask_y)
    return r.mean, r.stderr, fwd.n, r.pairs


def _choose(pinning, model, t, x2, n, has_half):
    if pinning != "auto":
        return pinning
    if not has_half:
        return "indicator"
    return "indicator" if n * _free_proxy(model, t, x2) >= 2000 else "splice"


def pinned_multi(model, t_grid, x1_funcs, x2, n_samples, seed=0, pinning="splice", kill=None,
                 max_pairs=5_000_000):
    """Rao-Blackwell estimates of P(X_t = (x1(t), x2)) for several first-coordinate targets.

    One forward batch (from 0) and, when splicing, one backward batch (from
    x2) serve every grid point and every target.  With ``kill`` = R the walk
    is killed on leaving [-R, R]^{d1+d2} (d1 = 1 only).  Returns one
    EstimateSeries per entry of ``x1_funcs``.
    """
    if pinning not in PINNINGS:
        raise ValueError(f"pinning must be one of {PINNINGS}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    grid = sorted(float(t) for t in t_grid)
    x2 = np.asarray(x2, dtype=np.int64).reshape(model.d2)
    kill_r = -1 if kill is None else int(kill)
    grid_set = set(grid)
    choices = [_choose(pinning, model, t, x2, n_samples, (t / 2 in grid_set) or pinning != "auto") for t in grid]
    fwd_cps = sorted(set([t for t, c in zip(grid, choices) if c == "indicator"]
                         + [t / 2 for t, c in zip(grid, choices) if c == "splice"]))
    fwd = sampling.run_walkers(model.field, fwd_cps, n_samples, seed, kill=kill_r, stream=1)
    bwd = None
    half = [t / 2 for t, c in zip(grid, choices) if c == "splice"]
    if half:
        bwd = sampling.run_walkers(model.field, half, n_samples, seed, start=x2, kill=kill_r, stream=2)
    out = []
    for x1_of_t in x1_funcs:
        pts = []
        for t, c in zip(grid, choices):
            x1 = np.asarray(x1_of_t(t), dtype=np.int64).reshape(model.d1)
            mean, se, n, hits = _pinned_values(model, t, x1, x2, fwd, bwd, c, kill, max_pairs)
            pts.append(EstimatePoint(t, mean, se, n, hits, {"mode": "RaoBlackwell", "pinning": c,
                                                             "target": [x1.tolist(), x2.tolist()]}))
        out.append(EstimateSeries(pts, {"seed": seed, "mode": "RaoBlackwell"}))
    return out


def pinned_series(model, t_grid, x1_of_t, x2, n_samples, seed=0, pinning="splice", kill=None, max_pairs=5_000_000):
    """Rao-Blackwell estimates of P(X_t = (x1(t), x2)) over a grid (see :func:`pinned_multi`)."""
    return pinned_multi(model, t_grid, [x1_of_t], x2, n_samples, seed, pinning, kill, max_pairs)[0]


def unpinned_from_batch(model, batch, grid, x1_of_t, seed=None):
    """E[p_{A2(t)}(0, x1(t))] from a batch of scenery walkers recorded at every grid time."""
    pts = []
    for t in grid:
        x1 = np.asarray(x1_of_t(t), dtype=np.int64).reshape(model.d1)
        vals = _first_kernel(model, batch.clock[:, batch.index(t)], x1)
        p = mean_point(t, vals)
        p.extra = {"mode": "RaoBlackwell", "pinning": "unpinned", "target": [x1.tolist(), None]}
        pts.append(p)
    return EstimateSeries(pts, {"seed": seed, "mode": "RaoBlackwell", "pinned": False})


def unpinned_series(model, t_grid, x1_of_t, n_samples, seed=0):
    """Estimates of E[p_{A2(t)}(0, x1(t))] = P(first coordinate of X_t equals x1(t))."""
    grid = sorted(float(t) for t in t_grid)
    batch = sampling.run_walkers(model.field, grid, n_samples, seed, stream=1)
    return unpinned_from_batch(model, batch, grid, x1_of_t, seed)


def kernel_estimate(model, t, target, n_samples, mode="RaoBlackwell", pinning="indicator", seed=0):
    """Estimate P_0^omega(X_t = (x1, x2)).

    Parameters
    ----------
    mode : {"RaoBlackwell", "DirectGillespie", "Factorized"}
        RaoBlackwell averages p_{A2(t)}(0, x1) 1{S2_t = x2}; DirectGillespie
        averages the indicator of hitting the target in an event-driven run;
        Factorized multiplies E[p_{A2(t)}(0, x1)] by P(S2_t = x2) (exact
        kernel), which ignores their correlation and is only approximate.
    pinning : {"indicator", "splice", "auto"}
        How the event {S2_t = x2} is handled in RaoBlackwell mode.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    _check_t(t)
    x1, x2 = _split_target(model, target)
    tgt = (tuple(int(c) for c in x1), tuple(int(c) for c in x2))
    if t == 0:
        v = 1.0 if not (x1.any() or x2.any()) else 0.0
        return KernelEstimate(0.0, tgt, v, 0.0, n_samples, mode, n_samples if v else 0, pinning)
    if mode == "DirectGillespie":
        g1, g2, _ = gillespie_samples(model, t, n_samples, seed)
        hit = np.all(g1 == x1, axis=1) & np.all(g2 == x2, axis=1)
        p = mean_point(t, hit.astype(float))
        return KernelEstimate(float(t), tgt, p.estimate, p.stderr, n_samples, mode, p.hits, "indicator")
    if mode == "Factorized":
        p = unpinned_series(model, [t], lambda _: x1, n_samples, seed)[0]
        q = walk.kernel(model.d2, t, x2)
        return KernelEstimate(float(t), tgt, p.estimate * q, p.stderr * q, n_samples, mode, p.hits, "factorized")
    if pinning == "auto":
        pinning = "indicator" if n_samples * _free_proxy(model, t, x2) >= 2000 else "splice"
    s = pinned_series(model, [t], lambda _: x1, x2, n_samples, seed, pinning)
    p = s[0]
    return KernelEstimate(float(t), tgt, p.estimate, p.stderr, n_samples, mode, p.hits, pinning)


def rounded_target(t, delta, d1=1):
    """First coordinate floor(t^delta) e_1 (exact for integer powers)."""
    v = t**delta
    k = math.floor(v + 1e-9 * max(1.0, v))
    return [k] + [0] * (d1 - 1)


def moddev_estimate(model, t_grid, delta, n_samples, pinned=False, pinning="splice", seed=0):
    """Estimates of P(X_t = floor(t^delta) e_1) (pinned) or of its first-coordinate marginal."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    f = lambda t: rounded_target(t, delta, model.d1)
    if pinned:
        s = pinned_series(model, t_grid, f, [0] * model.d2, n_samples, seed, pinning)
    else:
        s = unpinned_series(model, t_grid, f, n_samples, seed)
    s.meta.update({"delta": delta, "pinned": pinned})
    return s


# -- Green function ----------------------------------------------------------------

@dataclass
class GreenEstimate:
    """Monte Carlo Green function with its error budget.

    ``stderr`` is statistical; ``bias_bound`` bounds the quadrature
    truncation (small-t piece plus 100% of the extrapolated tail).
    """

    n: int
    value: float
    stderr: float
    bias_bound: float
    tail_mass: float
    tail_slope: float
    small_t_bound: float
    series: EstimateSeries = dc_field(repr=False)

    def __iter__(self):
        return iter((self.value, self.stderr))


def green_grid(n, mean_z, t_min=2.0**-4, per_octave=8):
    """Log grid t_min * 2^{j/per_octave} up to (at least) 64 n^2 / (2 E[z] wedge 1)."""
    t_max = 64.0 * n * n / min(2.0 * mean_z, 1.0)
    j_max = math.ceil(per_octave * math.log2(t_max / t_min))
    return [t_min * 2.0 ** (j / per_octave) for j in range(j_max + 1)]


def _check_green(model, kill):
    if kill is not None:
        return
    if model.field.law == "constant":
        if model.d1 + model.d2 <= 2:
            raise OutOfRegime("the walk is recurrent in dimension <= 2")
    elif not is_transient(model.d1, model.d2, model.field.alpha):
        raise OutOfRegime("the walk is recurrent (d1 = d2 = 1 and alpha >= 1): the Green function is infinite")


def _targets(model, n, direction):
    if direction == "layer":
        return [n] + [0] * (model.d1 - 1), [0] * model.d2
    if direction == "perpendicular":
        return [0] * model.d1, [n] + [0] * (model.d2 - 1)
    raise ValueError("direction must be 'layer' or 'perpendicular'")


def integrate_series(n, series, killed=False, decay=None):
    """Trapezoid rule in log t plus the tail beyond the last grid point.

    The tail is c T^{1-decay} / (decay - 1), with the amplitude c fitted on
    the last two octaves at the given ``decay`` exponent (or, if ``decay`` is
    None, with both fitted on the last octave).  The tail is added to the
    value and also reported in full as the bias bound.
    """
    t = series.t
    f = series.estimate
    se = series.stderr
    # int f dt = int f(e^u) e^u du
    g = f * t
    du = np.diff(np.log(t))
    w = np.zeros(t.size)
    w[:-1] += du / 2
    w[1:] += du / 2
    body = float(np.dot(w, g))
    body_se = float(np.dot(w, se * t))  # errors at different t are positively correlated
    small = 0.5 * t[0] * f[0]  # piece on [0, t_min], using f(0) = 0
    tail, slope = math.inf, math.nan
    if killed:
        # the killed integrand decays exponentially; f(T) T bounds the remainder generously
        tail = float(f[-1] * t[-1])
    elif decay is not None and decay > 1.0:
        last = t >= t[-1] / 4.0
        slope = -float(decay)
        amp = float(np.mean(f[last] * t[last] ** decay))
        tail = amp * t[-1] ** (1.0 - decay) / (decay - 1.0)
    else:
        last = t >= t[-1] / 2.0
        if last.sum() >= 3 and np.all(f[last] > 0):
            slope = float(np.polyfit(np.log(t[last]), np.log(f[last]), 1)[0])
            if slope < -1.0:
                tail = float(f[-1] * t[-1] / (-slope - 1.0))
    value = small + body + (tail if math.isfinite(tail) and not killed else 0.0)
    return GreenEstimate(n, value, body_se, small + tail, tail, slope, small, series)


def _decay(model):
    """On-diagonal decay exponent of the model, used for the Green tail."""
    if model.field.law == "constant":
        return (model.d1 + model.d2) / 2.0
    return ondiag_exponent(model.d1, model.d2, model.field.alpha)


def green_estimate(model, n, n_samples, t_grid=None, seed=0, direction="layer", kill=None, max_pairs=1_000_000):
    """g(0, target) = int_0^inf P(X_t = target) dt with target n e_1 (``direction="layer"``)
    or n e_{d1+1} (``direction="perpendicular"``).

    The integrand is estimated on a log grid (8 points per octave) and
    integrated by the trapezoid rule in log t; beyond the grid a power law
    fitted to the last octave is integrated analytically.  With ``kill`` = R
    the walk is killed on leaving [-R, R]^{d1+d2}, which is the Green
    function of the box with absorbing boundary.
    """
    _check_green(model, kill)
    if n < 1:
        raise ValueError("n must be positive")
    grid = t_grid if t_grid is not None else green_grid(n, model.field.mean())
    x1, x2 = _targets(model, n, direction)
    series = pinned_series(model, grid, lambda _: x1, x2, n_samples, seed, "auto", kill, max_pairs)
    return integrate_series(n, series, kill is not None, None if kill is not None else _decay(model))


def green_series(model, n_values, n_samples, seed=0, direction="layer", max_pairs=200_000):
    """Green estimates on a grid of distances, as an EstimateSeries over n.

    Along the layer direction all distances share one pair of walker
    batches and the time grid of the largest n.  The stderr of
    each point adds the truncation bias bound to the statistical error.
    """
    _check_green(model, None)
    ns = sorted(int(n) for n in n_values)
    m = model.field.mean()
    if direction == "layer":
        grid = green_grid(ns[-1], m)
        funcs = [(lambda _, k=k: [k] + [0] * (model.d1 - 1)) for k in ns]
        multi = pinned_multi(model, grid, funcs, [0] * model.d2, n_samples, seed, "auto", None, max_pairs)
        # every n uses the full shared grid, which only shrinks its tail
        ests = [integrate_series(k, s, False, _decay(model)) for k, s in zip(ns, multi)]
    else:
        ests = [green_estimate(model, k, n_samples, seed=seed, direction=direction, max_pairs=max_pairs) for k in ns]
    pts = []
    for g in ests:
        pts.append(EstimatePoint(float(g.n), g.value, g.stderr + g.bias_bound, n_samples, int(g.series.hits.sum()),
                                 {"statistical_stderr": g.stderr, "bias_bound": g.bias_bound,
                                  "tail_slope": g.tail_slope, "direction": direction}))
    return EstimateSeries(pts, {"seed": seed, "direction": direction})


def directional_green_report(model, n_values, n_samples, seed=0):
    """Green function along e_1 and along a scenery direction, side by side."""
    rows = []
    for n in sorted(n_values):
        a = green_estimate(model, n, n_samples, seed=seed, direction="layer")
        b = green_estimate(model, n, n_samples, seed=seed, direction="perpendicular")
        rows.append({"n": n, "layer": a.value, "layer_stderr": a.stderr, "layer_bias": a.bias_bound,
                     "perpendicular": b.value, "perpendicular_stderr": b.stderr, "perpendicular_bias": b.bias_bound})
    return rows


# -- local CLT ----------------------------------------------------------------------

def averaged_kernel(model, t, target):
    """Kernel of the walk with every conductance replaced by its mean."""
    x1, x2 = _split_target(model, target)
    m = model.field.mean()
    return walk.kernel(model.d1, t, x1, rate=m) * walk.kernel(model.d2, t, x2)


def lclt_ratio(model, t, targets, n_samples, seed=0, pinning="splice", max_pairs=5_000_000):
    """Ratio of the quenched kernel estimate to the averaged-environment kernel.

    Targets sharing the same x2 share their walker batches.
    """
    if not math.isfinite(model.field.mean()):
        raise OutOfRegime("E[z(0)] is infinite (alpha <= 1): no averaged walk")
    out = {}
    by_x2 = {}
    for tg in targets:
        x1, x2 = _split_target(model, tg)
        by_x2.setdefault(tuple(x2.tolist()), []).append(tuple(x1.tolist()))
    cps_f = [t] if pinning == "indicator" else [t / 2]
    fwd = sampling.run_walkers(model.field, cps_f, n_samples, seed, stream=1)
    for j, (x2, x1s) in enumerate(sorted(by_x2.items())):
        x2a = np.asarray(x2, dtype=np.int64)
        bwd = None
        if pinning == "splice":
            bwd = sampling.run_walkers(model.field, cps_f, n_samples, seed, start=x2a, stream=1000 + j)
        for x1 in x1s:
            x1a = np.asarray(x1, dtype=np.int64)
            mean, se, _, _ = _pinned_values(model, t, x1a, x2a, fwd, bwd, pinning, None, max_pairs)
            den = averaged_kernel(model, t, (x1a, x2a))
            out[(x1, x2)] = (mean / den, se / den)
    res = []
    for tg in targets:
        x1, x2 = _split_target(model, tg)
        key = (tuple(x1.tolist()), tuple(x2.tolist()))
        res.append((key, *out[key]))
    return res
