"""log(e^-z I_n(z)) for integer n >= 0 and real z >= 0.

The continuous-time walk kernel is a product of factors e^{-z} I_n(z); with
heavy-tailed clocks z reaches 1e12 and beyond, so everything is done on the
log scale.  Regions:

* z < 30: the power series (all terms positive, no cancellation).
* n >= 50: Debye's uniform expansion, 13 terms.
* z >= max(30, n^2): Hankel's large-argument expansion.
* otherwise: Miller's backward recurrence normalised by
  e^{-z} (I_0 + 2 sum_k I_k) = 1, started ~9 sqrt(z) orders above n.
"""

from fractions import Fraction
import math

import numpy as np
from numba import njit

_DEBYE_TERMS = 13


def _debye_polynomials(kmax):
    # U_{k+1}(p) = p^2 (1 - p^2) U_k'(p) / 2 + (1/8) int_0^p (1 - 5 t^2) U_k(t) dt
    polys = [[Fraction(1)]]
    for _ in range(kmax - 1):
        u = polys[-1]
        out = [Fraction(0)] * (len(u) + 3)
        for j, c in enumerate(u):
            out[j + 1] += Fraction(j, 2) * c + c / (8 * (j + 1))
            out[j + 3] += -Fraction(j, 2) * c - 5 * c / (8 * (j + 3))
        while len(out) > 1 and out[-1] == 0:
            out.pop()
        polys.append(out)
    width = max(len(p) for p in polys)
    table = np.zeros((kmax, width))
    for k, p in enumerate(polys):
        table[k, : len(p)] = [float(c) for c in p]
    return table


_U = _debye_polynomials(_DEBYE_TERMS)


@njit(cache=True)
def _log_series(n, z):
    q = 0.25 * z * z
    term = 1.0
    s = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * (n + k))
        s += term
        if term < 1e-17 * s:
            break
    return n * math.log(0.5 * z) - math.lgamma(n + 1.0) + math.log(s) - z


@njit(cache=True)
def _log_debye(n, z, table):
    nu = float(n)
    x = z / nu
    r = math.sqrt(1.0 + x * x)
    p = 1.0 / r
    # nu * eta - z, written without cancellation
    expo = nu / (r + x) - nu * math.asinh(1.0 / x)
    s = 0.0
    nupow = 1.0
    for k in range(table.shape[0]):
        pk = 0.0
        for j in range(table.shape[1] - 1, -1, -1):
            pk = pk * p + table[k, j]
        s += pk / nupow
        nupow *= nu
    return expo - 0.5 * math.log(2.0 * math.pi * nu) - 0.25 * math.log(1.0 + x * x) + math.log(s)


@njit(cache=True)
def _log_hankel(n, z):
    mu = 4.0 * n * n
    term = 1.0
    s = 1.0
    prev = 1.0
    k = 0
    ok = False
    while k < 200:
        k += 1
        odd = 2 * k - 1
        term *= -(mu - odd * odd) / (k * 8.0 * z)
        if abs(term) > abs(prev) and k > 1:
            break
        s += term
        prev = term
        if abs(term) < 1e-17 * abs(s):
            ok = True
            break
    if not ok:
        return np.nan
    return -0.5 * math.log(2.0 * math.pi * z) + math.log(s)


@njit(cache=True)
def _log_miller(n, z):
    top = n + int(9.0 * math.sqrt(z)) + 40
    ip1 = 0.0
    ik = 1e-300
    total = 0.0
    target = 0.0
    for k in range(top, 0, -1):
        im1 = (2.0 * k / z) * ik + ip1
        total += 2.0 * ik
        if k == n:
            target = ik
        ip1 = ik
        ik = im1
        if ik > 1e250:
            ip1 *= 1e-250
            ik *= 1e-250
            total *= 1e-250
            target *= 1e-250
    total += ik
    if n == 0:
        target = ik
    if target == 0.0:
        return -np.inf
    return math.log(target) - math.log(total)


@njit(cache=True)
def log_ive_scalar(n, z, table):
    if n < 0:
        n = -n
    if z < 0.0:
        return np.nan
    if z == 0.0:
        return 0.0 if n == 0 else -np.inf
    if z < 30.0:
        return _log_series(n, z)
    if n >= 50:
        return _log_debye(n, z, table)
    if z >= max(30.0, float(n) * n):
        v = _log_hankel(n, z)
        if not np.isnan(v):
            return v
    return _log_miller(n, z)


@njit(cache=True)
def _log_ive_vec(n, z, out, table):
    for i in range(n.size):
        out[i] = log_ive_scalar(n[i], z[i], table)


def log_ive(n, z):
    """Elementwise log(e^{-z} I_n(z)); ``n`` integer (sign ignored), ``z >= 0``."""
    n_arr, z_arr = np.broadcast_arrays(np.asarray(n, dtype=np.int64), np.asarray(z, dtype=np.float64))
    out = np.empty(z_arr.shape)
    _log_ive_vec(np.array(n_arr).ravel(), np.array(z_arr).ravel(), out.reshape(-1), _U)
    if out.ndim == 0:
        return float(out)
    return out


def ive(n, z):
    """Exponentially scaled modified Bessel function e^{-z} I_n(z) for integer n."""
    return np.exp(log_ive(n, z))
