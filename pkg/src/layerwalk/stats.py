"""Estimate series, log-log exponent fits and verdicts."""

from dataclasses import dataclass, field, asdict
import json
import math
import warnings

import numpy as np

MIN_HITS = 25


class InsufficientData(ValueError):
    pass


def clean_json(obj):
    """Plain JSON types throughout; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    return obj


@dataclass
class EstimatePoint:
    t: float
    estimate: float
    stderr: float
    n: int
    hits: int
    extra: dict = field(default_factory=dict)

    def record(self, seed=None):
        out = {"t": self.t, "estimate": self.estimate, "stderr": self.stderr, "n": self.n, "hits": self.hits,
               "seed": seed}
        out.update(self.extra)
        return out


@dataclass
class EstimateSeries:
    """Estimates on an increasing grid of horizons (or distances)."""

    points: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("grid must be strictly increasing")

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def t(self):
        return np.array([p.t for p in self.points], dtype=float)

    @property
    def estimate(self):
        return np.array([p.estimate for p in self.points], dtype=float)

    @property
    def stderr(self):
        return np.array([p.stderr for p in self.points], dtype=float)

    @property
    def hits(self):
        return np.array([p.hits for p in self.points], dtype=np.int64)

    def scaled(self, c):
        pts = [EstimatePoint(p.t, c * p.estimate, abs(c) * p.stderr, p.n, p.hits, dict(p.extra)) for p in self.points]
        return EstimateSeries(pts, dict(self.meta))

    def jsonl_lines(self):
        seed = self.meta.get("seed")
        return [json.dumps(clean_json(p.record(seed)), sort_keys=True) for p in self.points]

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.jsonl_lines():
                fh.write(line + "\n")

    @classmethod
    def read_jsonl(cls, path):
        pts = []
        meta = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                extra = {k: v for k, v in rec.items() if k not in ("t", "estimate", "stderr", "n", "hits", "seed")}
                est = math.nan if rec["estimate"] is None else rec["estimate"]
                se = math.inf if rec["stderr"] is None else rec["stderr"]
                pts.append(EstimatePoint(rec["t"], est, se, rec["n"], rec["hits"], extra))
                meta["seed"] = rec.get("seed")
        return cls(pts, meta)


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    slope_ci: tuple
    r_squared: float
    points_used: int
    excluded: int = 0

    def as_dict(self):
        out = asdict(self)
        out["slope_ci"] = list(self.slope_ci)
        return out


def _wls(x, y, w):
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    return slope, ym - slope * xm


def fit_exponent(series, min_hits=MIN_HITS, n_boot=10_000, seed=0, level=0.95):
    """Weighted least squares of log(estimate) on log(t).

    Weights are (estimate / stderr)^2, the inverse delta-method variance of
    the log; points with zero stderr get the largest finite weight.  Points
    with fewer than ``min_hits`` hits are dropped with a warning.  The slope
    interval comes from a parametric per-point resampling bootstrap in log
    space, widened by the Birge ratio when the residual scatter exceeds the
    quoted errors.

    Parameters
    ----------
    series : EstimateSeries
    min_hits : int
        Points with fewer hits (or a zero estimate) are excluded.
    n_boot : int
        Bootstrap resamples.
    seed : int
        Seed of the bootstrap generator.
    """
    t, est, se, hits = series.t, series.estimate, series.stderr, series.hits
    keep = (est > 0) & (hits >= min_hits) & np.isfinite(se) & np.isfinite(est)
    excluded = int((~keep).sum())
    if excluded:
        warnings.warn(f"{excluded} point(s) excluded from the fit (zero or non-finite estimate, or fewer than {min_hits} hits)")
    if keep.sum() < 3:
        raise InsufficientData(f"need at least 3 usable points, have {int(keep.sum())}")
    x = np.log(t[keep])
    y = np.log(est[keep])
    sl = se[keep] / est[keep]
    if np.all(sl <= 0):
        sl = np.ones_like(sl)
    else:
        floor = sl[sl > 0].min()
        sl = np.where(sl > 0, sl, floor)
    w = 1.0 / sl**2
    slope, icpt = _wls(x, y, w)
    resid = y - (icpt + slope * x)
    ss_res = (w * resid**2).sum()
    ym = (w * y).sum() / w.sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(1, x.size - 2)
    birge = max(1.0, math.sqrt(ss_res / dof))
    rng = np.random.default_rng(seed)
    ys = y + rng.standard_normal((n_boot, y.size)) * sl
    xm = (w * x).sum() / w.sum()
    sxx = (w * (x - xm) ** 2).sum()
    boot = ((ys - (ys * w).sum(axis=1, keepdims=True) / w.sum()) * (w * (x - xm))).sum(axis=1) / sxx
    q = (1.0 - level) / 2.0
    lo, hi = np.quantile(boot, [q, 1.0 - q])
    lo = slope - birge * (slope - lo)
    hi = slope + birge * (hi - slope)
    return ExponentFit(float(slope), float(icpt), (float(min(lo, slope)), float(max(hi, slope))), float(r2),
                       int(x.size), excluded)


def compare_to_theory(fit, theoretical, tolerance):
    """PASS iff |slope - theoretical| <= tolerance or theoretical lies in the CI."""
    gap = abs(fit.slope - theoretical)
    within_tol = gap <= tolerance
    within_ci = fit.slope_ci[0] <= theoretical <= fit.slope_ci[1]
    return {
        "verdict": "PASS" if (within_tol or within_ci) else "FAIL",
        "slope": fit.slope,
        "theoretical": theoretical,
        "tolerance": tolerance,
        "gap": gap,
        "within_tolerance": within_tol,
        "within_ci": within_ci,
        "slope_ci": list(fit.slope_ci),
    }


def binomial_point(t, hits, n, **extra):
    p = hits / n
    return EstimatePoint(float(t), p, math.sqrt(p * (1.0 - p) / n), int(n), int(hits), extra)


def mean_point(t, values, hits=None, **extra):
    """Sample mean with its standard error; ``hits`` defaults to the nonzero count."""
    v = np.asarray(values, dtype=float)
    n = v.size
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    h = int(np.count_nonzero(v)) if hits is None else int(hits)
    return EstimatePoint(float(t), float(v.mean()), se, n, h, extra)
