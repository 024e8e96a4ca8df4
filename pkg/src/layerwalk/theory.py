"""Closed-form exponents and constants for the RWRS and the layered walk.

Every function returns a float, or an exact :class:`fractions.Fraction`
with ``exact=True`` (real inputs are converted through their decimal
representation, so ``0.3`` means 3/10).  Parameter points outside the
regime where a formula is established raise :class:`OutOfRegime`.
"""

from dataclasses import dataclass
from fractions import Fraction
import math


class OutOfRegime(ValueError):
    pass


def _num(x, exact):
    if exact:
        return x if isinstance(x, Fraction) else Fraction(str(x))
    return float(x)


def _out(v, exact):
    return v if exact else float(v)


def _pos_alpha(alpha):
    if not alpha > 0:
        raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class TheoryParams:
    d1: int
    d2: int
    alpha: float
    delta: float | None = None
    rho: float | None = None
    mean_z: float | None = None

    def mean(self):
        if self.mean_z is not None:
            return self.mean_z
        if self.alpha <= 1:
            raise OutOfRegime("E[z(0)] is infinite for alpha <= 1")
        return self.alpha / (self.alpha - 1)


def s_exponent(d2, alpha, exact=False):
    """Scaling exponent s(d, alpha) of A(t)."""
    _pos_alpha(alpha)
    a = _num(alpha, exact)
    if d2 < 1:
        raise ValueError("dimension must be at least 1")
    v = (a + 1) / (2 * a) if d2 == 1 else 1 / a
    return _out(max(v, 1), exact)


def ondiag_exponent(d1, d2, alpha, exact=False):
    """beta with P_0(X_t = 0) = t^{-beta + o(1)}."""
    s = s_exponent(d2, alpha, True)
    return _out(Fraction(d1, 2) * s + Fraction(d2, 2), exact)


def spectral_dimension(d1, d2, alpha, exact=False):
    return _out(d1 * s_exponent(d2, alpha, True) + d2, exact)


def moddev_exponent(d1, d2, alpha, delta, exact=False):
    """r with P_0(X_t = t^delta e_1) = t^{-r + o(1)}."""
    _pos_alpha(alpha)
    a = _num(alpha, True)
    dl = _num(delta, True)
    if d2 < 3:
        raise OutOfRegime("moderate-deviation exponent needs d2 >= 3")
    if not a < Fraction(d2, 2):
        raise OutOfRegime("moderate-deviation exponent needs alpha < d2/2")
    if dl < 0:
        raise ValueError("delta must be nonnegative")
    if not dl < Fraction(d2) / (4 * a):
        raise OutOfRegime(f"moderate-deviation exponent needs delta < d2/(4 alpha) = {float(Fraction(d2) / (4 * a))}")
    knee = max(1 / (2 * a), Fraction(1, 2))
    if dl <= knee:
        v = d1 * knee + Fraction(d2, 2)
    else:
        v = dl * (d1 + 2 * a) - 1 + Fraction(d2, 2)
    return _out(v, exact)


def is_transient(d1, d2, alpha):
    return d1 >= 2 or d2 >= 2 or alpha < 1


def green_exponent(d1, d2, alpha, exact=False):
    """Exponent gamma with g(0, n e_1) = n^{gamma + o(1)} (gamma < 0)."""
    _pos_alpha(alpha)
    a = _num(alpha, True)
    if not is_transient(d1, d2, alpha):
        raise OutOfRegime("the walk is recurrent for d1 = d2 = 1 and alpha >= 1")
    if d2 == 1:
        v = -d1 + min(Fraction(1), 2 * a / (a + 1))
    else:
        v = -d1 - min(Fraction(1), a, 4 * a / d2) * (d2 - 2)
    return _out(v, exact)


def bouchaud_spectral_dimension(d1, d2, alpha, exact=False):
    """Return-probability exponent (times 2) of the time-changed second coordinate."""
    _pos_alpha(alpha)
    a = _num(alpha, True)
    if d2 == 1:
        if d1 == 1 and not a < 1:
            raise OutOfRegime("needs alpha < 1 when d1 = d2 = 1")
        v = min(Fraction(1), 2 / (a + 1))
    else:
        v = 2 + min(Fraction(1), a, 4 * a / d2) * (d2 - 2)
    return _out(v, exact)


def csrw_spectral_dimension(d1, d2, alpha, exact=False):
    return _out(d1 + bouchaud_spectral_dimension(d1, d2, alpha, True), exact)


def intrinsic_distance(d2, alpha, x, y):
    """|x1 - y1|^{1/s} + |x2 - y2| for points given as (x1, x2) with x2 of length d2.

    |x2 - y2| is the Euclidean norm.
    """
    x1, x2 = x
    y1, y2 = y
    x2 = tuple(x2) if hasattr(x2, "__len__") else (x2,)
    y2 = tuple(y2) if hasattr(y2, "__len__") else (y2,)
    if len(x2) != d2 or len(y2) != d2:
        raise ValueError(f"second component must have {d2} coordinates")
    s = s_exponent(d2, alpha)
    return abs(x1 - y1) ** (1.0 / s) + math.sqrt(sum((a - b) ** 2 for a, b in zip(x2, y2)))


def tail_exponent(d, alpha, rho, pinned=False, exact=False):
    """Exponent of P_0(A(t) >= t^rho) (and of the pinned version) in the power-law regime."""
    _pos_alpha(alpha)
    a = _num(alpha, True)
    r = _num(rho, True)
    if d < 3 or not a < Fraction(d, 2):
        raise OutOfRegime("power-law tail needs d >= 3 and alpha < d/2")
    if not max(1 / a, Fraction(1)) < r < Fraction(d) / (2 * a):
        raise OutOfRegime("power-law tail needs 1/alpha v 1 < rho < d/(2 alpha)")
    v = -a * r + 1 - (Fraction(d, 2) if pinned else 0)
    return _out(v, exact)


def ldp_exponent(d, alpha):
    """Stretched-exponential rate of P_0(A(t) >= ct), c > E[z]; display only."""
    if d == 1:
        if not alpha > 1:
            raise OutOfRegime("needs alpha > 1")
        return (alpha - 1) / (alpha + 1)
    if not alpha > d / 2:
        raise OutOfRegime("needs alpha > d/2")
    return (2 * alpha - d) / (2 * alpha + d)


def pareto_mean(alpha):
    if not alpha > 1:
        raise OutOfRegime("E[z(0)] is infinite for alpha <= 1")
    return alpha / (alpha - 1)


def ondiag_constant(d2, mean_z):
    """Limit of t^{(d2+1)/2} P_0(X_t = 0) when d1 = 1 and E[z] is finite."""
    return (4 * math.pi) ** (-(d2 + 1) / 2) * mean_z ** -0.5


def green_constant_stated(d2, mean_z):
    """(1/4) Gamma((d2-1)/2) E[z]^{(d2-2)/2}, the constant as stated in the literature."""
    return 0.25 * math.gamma((d2 - 1) / 2) * mean_z ** ((d2 - 2) / 2)


def green_constant_gaussian(d2, mean_z):
    """n^{d2-1} times the time integral of the anisotropic Gaussian kernel at n e_1 (d1 = 1).

    int_0^inf (4 pi m t)^{-1/2} (4 pi t)^{-d2/2} e^{-n^2/(4 m t)} dt
      = (4 pi)^{-D/2} m^{-1/2} Gamma(D/2 - 1) (4 m)^{D/2 - 1} n^{2 - D},  D = 1 + d2.
    """
    if d2 < 2:
        raise OutOfRegime("the Gaussian Green integral diverges for d2 < 2")
    big_d = 1 + d2
    return ((4 * math.pi) ** (-big_d / 2) * mean_z ** -0.5 * math.gamma(big_d / 2 - 1)
            * (4 * mean_z) ** (big_d / 2 - 1))


def constants(d1, d2, alpha, mean_z=None):
    """Finite-mean constants: on-diagonal and both Green constants."""
    if d1 != 1:
        raise OutOfRegime("constants are tabulated for d1 = 1")
    m = pareto_mean(alpha) if mean_z is None else float(mean_z)
    if mean_z is None and not alpha > 1:
        raise OutOfRegime("needs alpha > 1")
    out = {"ondiag_const": ondiag_constant(d2, m)}
    out["green_const_paper"] = green_constant_stated(d2, m) if d2 >= 2 else math.nan
    out["green_const_derived"] = green_constant_gaussian(d2, m) if d2 >= 2 else math.nan
    return out


# (name, function, args, expected) with expected an exact Fraction or a float
GOLDEN = [
    ("s_exponent", s_exponent, (1, 0.5), Fraction(3, 2)),
    ("s_exponent", s_exponent, (2, 2), Fraction(1)),
    ("s_exponent", s_exponent, (3, 0.5), Fraction(2)),
    ("ondiag_exponent", ondiag_exponent, (1, 1, 0.5), Fraction(5, 4)),
    ("ondiag_exponent", ondiag_exponent, (1, 2, 0.5), Fraction(2)),
    ("ondiag_exponent", ondiag_exponent, (1, 3, 2), Fraction(2)),
    ("spectral_dimension", spectral_dimension, (1, 1, 0.5), Fraction(5, 2)),
    ("spectral_dimension", spectral_dimension, (1, 2, 0.5), Fraction(4)),
    ("spectral_dimension", spectral_dimension, (2, 1, 0.5), Fraction(4)),
    ("moddev_exponent", moddev_exponent, (1, 3, 1, 0.3), Fraction(2)),
    ("moddev_exponent", moddev_exponent, (1, 3, 1, 0.6), Fraction(23, 10)),
    ("moddev_exponent", moddev_exponent, (1, 3, 0.5, 1.0), Fraction(5, 2)),
    ("green_exponent", green_exponent, (1, 1, 0.5), Fraction(-1, 3)),
    ("green_exponent", green_exponent, (1, 5, 1), Fraction(-17, 5)),
    ("green_exponent", green_exponent, (1, 3, 2), Fraction(-2)),
    ("csrw_spectral_dimension", csrw_spectral_dimension, (1, 1, 0.5), Fraction(2)),
    ("csrw_spectral_dimension", csrw_spectral_dimension, (2, 3, 1), Fraction(5)),
    ("csrw_spectral_dimension", csrw_spectral_dimension, (2, 1, 3), Fraction(5, 2)),
    ("intrinsic_distance", intrinsic_distance, (1, 0.5, (8, (0,)), (0, (0,))), 4.0),
    ("intrinsic_distance", intrinsic_distance, (2, 2, (3, (4, 0)), (0, (0, 0))), 7.0),
    ("ondiag_const", lambda d2, a: constants(1, d2, a)["ondiag_const"], (1, 3), (4 * math.pi) ** -1 * 1.5 ** -0.5),
    ("green_const_paper", lambda d2, m: green_constant_stated(d2, m), (2, 1.7), math.gamma(0.5) / 4),
    ("green_const_derived", lambda d2, m: green_constant_gaussian(d2, m), (2, 1.7), 1 / (4 * math.pi)),
]


def check_golden(rtol=1e-12):
    """Replay the golden table; returns a list of (name, args, got, expected, ok)."""
    rows = []
    for name, fn, args, want in GOLDEN:
        if isinstance(want, Fraction):
            got = fn(*args, exact=True)
            ok = got == want
        else:
            got = fn(*args)
            ok = abs(got - want) <= rtol * abs(want)
        rows.append((name, args, got, want, ok))
    return rows


TABLE_FIELDS = ("d1", "d2", "alpha", "s", "ondiag_exponent", "spectral_dimension", "green_exponent",
                "csrw_spectral_dimension", "ondiag_const", "green_const_paper", "green_const_derived")


def table_row(d1, d2, alpha):
    """One row of the exponent table; entries outside their regime are left empty."""

    def safe(fn, *args):
        try:
            return fn(*args)
        except OutOfRegime:
            return None

    row = {"d1": d1, "d2": d2, "alpha": alpha, "s": s_exponent(d2, alpha),
           "ondiag_exponent": ondiag_exponent(d1, d2, alpha),
           "spectral_dimension": spectral_dimension(d1, d2, alpha),
           "green_exponent": safe(green_exponent, d1, d2, alpha),
           "csrw_spectral_dimension": safe(csrw_spectral_dimension, d1, d2, alpha)}
    c = safe(constants, d1, d2, alpha) if d1 == 1 and alpha > 1 else None
    for k in ("ondiag_const", "green_const_paper", "green_const_derived"):
        v = None if c is None else c[k]
        row[k] = None if v is None or (isinstance(v, float) and math.isnan(v)) else v
    return row
