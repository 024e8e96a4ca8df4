"""Exact finite-box computations: uniformization and sparse Green solves."""

from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, bicgstab

from .scenery import Box, box_values

ABSORBING, REFLECTING = "absorbing", "reflecting"
MAX_PRODUCTS = 1_000_000


class ResourceError(RuntimeError):
    pass


@dataclass
class GeneratorBox:
    """Sparse generator of a continuous-time chain on the states of a box.

    ``q`` is the generator (rows = from-state); with an absorbing boundary
    the diagonal also counts the rate of edges leaving the box, so rows sum
    to minus the killing rate.  States are the box points in lexicographic
    order (last coordinate fastest).
    """

    q: sp.csr_matrix
    boundary: str
    lo: tuple = ()
    hi: tuple = ()
    symmetric: bool = True

    @property
    def n_states(self):
        return self.q.shape[0]

    @property
    def shape(self):
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def uniformization_rate(self):
        return float(np.max(-self.q.diagonal())) if self.n_states else 0.0

    def index(self, x):
        if not self.lo:
            i = int(x if np.ndim(x) == 0 else x[0])
            if not 0 <= i < self.n_states:
                raise ValueError("state outside the chain")
            return i
        x = tuple(int(c) for c in np.atleast_1d(x))
        if len(x) != len(self.lo) or any(not l <= c <= h for c, l, h in zip(x, self.lo, self.hi)):
            raise ValueError(f"state {x} outside the box")
        return int(np.ravel_multi_index(tuple(c - l for c, l in zip(x, self.lo)), self.shape))

    @classmethod
    def from_matrix(cls, q, boundary=REFLECTING):
        """Chain given directly by a generator matrix (off-diagonal rates >= 0)."""
        q = sp.csr_matrix(q, dtype=float)
        return cls(q, boundary, (), (), bool(abs(q - q.T).max() == 0) if q.shape[0] else True)

    @classmethod
    def layered(cls, model, radius=None, lo=None, hi=None, boundary=ABSORBING, csrw=False):
        """Generator of the layered walk restricted to a box of Z^{d1+d2}.

        Edge rates are z(x2) along the first d1 axes and 1 along the others.
        With ``csrw`` every row is divided by the total weight
        2 d1 z(x2) + 2 d2 (constant-speed walk).
        """
        d1, d2 = model.d1, model.d2
        d = d1 + d2
        if radius is not None:
            lo, hi = (-radius,) * d, (radius,) * d
        lo, hi = tuple(int(c) for c in lo), tuple(int(c) for c in hi)
        if boundary not in (ABSORBING, REFLECTING):
            raise ValueError("boundary must be 'absorbing' or 'reflecting'")
        shape = tuple(h - l + 1 for l, h in zip(lo, hi))
        zs = box_values(model.field, Box(lo[d1:], hi[d1:])).reshape(shape[d1:])
        zfull = np.broadcast_to(zs, shape)
        rates = [zfull if i < d1 else np.ones(shape) for i in range(d)]
        return cls._assemble(lo, hi, rates, boundary, csrw, weight=2.0 * d1 * zfull + 2.0 * d2)

    @classmethod
    def free_walk(cls, d, radius, boundary=ABSORBING, rate=1.0):
        lo, hi = (-radius,) * d, (radius,) * d
        shape = (2 * radius + 1,) * d
        rates = [np.full(shape, float(rate)) for _ in range(d)]
        return cls._assemble(lo, hi, rates, boundary, False)

    @classmethod
    def _assemble(cls, lo, hi, rates, boundary, csrw, weight=None):
        shape = tuple(h - l + 1 for l, h in zip(lo, hi))
        n = int(np.prod(shape))
        idx = np.arange(n).reshape(shape)
        rows, cols, vals = [], [], []
        diag = np.zeros(shape)
        for axis, r in enumerate(rates):
            for step in (1, -1):
                src = [slice(None)] * len(shape)
                dst = [slice(None)] * len(shape)
                if step == 1:
                    src[axis], dst[axis] = slice(0, -1), slice(1, None)
                    edge = [slice(None)] * len(shape)
                    edge[axis] = -1
                else:
                    src[axis], dst[axis] = slice(1, None), slice(0, -1)
                    edge = [slice(None)] * len(shape)
                    edge[axis] = 0
                rr = r[tuple(src)]
                rows.append(idx[tuple(src)].ravel())
                cols.append(idx[tuple(dst)].ravel())
                vals.append(rr.ravel())
                diag[tuple(src)] -= rr
                if boundary == ABSORBING:
                    diag[tuple(edge)] -= r[tuple(edge)]
        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag.ravel())
        q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        symmetric = True
        if csrw:
            w = np.asarray(weight, dtype=float).ravel()
            if np.any(w <= 0):
                raise ValueError("total weight must be positive for the constant-speed walk")
            q = sp.diags(1.0 / w) @ q
            q = q.tocsr()
            symmetric = False
        return cls(q, boundary, lo, hi, symmetric)


def _poisson_logw(k, lt):
    return -lt + k * math.log(lt) - math.lgamma(k + 1.0) if lt > 0 else (0.0 if k == 0 else -math.inf)


def transition_row(gen, t, start, tol=1e-12, max_products=MAX_PRODUCTS):
    """Distribution of X_t from ``start`` by uniformization.

    Returns (vector over states, iterations).  The series is cut once the
    Poisson weights beyond the mode have tail mass below ``tol``.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    i0 = gen.index(start)
    v = np.zeros(gen.n_states)
    v[i0] = 1.0
    if t == 0:
        return v, 0
    lam = gen.uniformization_rate
    if lam == 0:
        return v, 0
    lt = lam * t
    # P^T = I + Q^T / lam; distribution vectors are propagated as columns
    pt = (sp.identity(gen.n_states, format="csr") + gen.q / lam).T.tocsr()
    out = np.zeros_like(v)
    acc = 0.0
    k = 0
    while True:
        w = math.exp(_poisson_logw(k, lt))
        out += w * v
        acc += w
        if k > lt and 1.0 - acc < tol:
            break
        if k > lt and w == 0.0 and acc > 0.5:
            break
        k += 1
        if k > max_products:
            raise ResourceError(f"uniformization needs more than {max_products} products (lambda t = {lt:.3g})")
        v = pt @ v
    return out, k


def exact_prob(gen, t, start, end, info=False):
    """P(X_t = end | X_0 = start); with ``info`` also the absorbed mass and iteration count."""
    row, it = transition_row(gen, t, start)
    val = float(row[gen.index(end)])
    if info:
        return {"value": val, "absorbed_mass": float(max(0.0, 1.0 - row.sum())), "iterations": it}
    return val


def exact_green(gen, start, end, rtol=1e-12, maxiter=100_000, info=False):
    """g(start, end) = int_0^inf P(X_t = end | X_0 = start) dt on an absorbing box.

    Solves (-Q)^T g = delta_start by conjugate gradients (BiCGSTAB when the
    generator is not symmetric) and checks the residual.
    """
    if gen.boundary != ABSORBING:
        raise ValueError("the Green function needs an absorbing boundary")
    a = (-gen.q).T.tocsr()
    b = np.zeros(gen.n_states)
    b[gen.index(start)] = 1.0
    count = [0]

    def cb(_):
        count[0] += 1

    solver = cg if gen.symmetric else bicgstab
    g, flag = solver(a, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=cb)
    resid = float(np.max(np.abs(a @ g - b)))
    if flag != 0 or resid > 1e-10:
        raise ResourceError(f"linear solve did not converge (flag {flag}, residual {resid:.3g})")
    val = float(g[gen.index(end)])
    if info:
        return {"value": val, "residual": resid, "iterations": count[0], "absorbed_mass": 1.0}
    return val
