"""Heavy-tailed i.i.d. sceneries on Z^d, evaluated lazily from a site hash.

A scenery is never stored.  The value at a site is computed from a uniform
variate obtained by hashing the packed site coordinates together with the
scenery seed, so a walk that explores 10^5 sites of an unbounded lattice
costs O(visited) memory and two fields with the same seed agree bit for bit.

Coordinate packing gives each axis ``64 // d`` bits (two's complement with a
bias); within that range distinct sites get distinct 64-bit words, and the
keyed mixing that follows is a bijection, so no two sites share a variate.
"""

from dataclasses import dataclass, field as dc_field
from itertools import product
import math

import numpy as np
from numba import njit

from .rng import mix64, to_unit, stream_key

PARETO, CAPPED, CONSTANT, BERNOULLI = 0, 1, 2, 3
_LAW_CODES = {"pareto": PARETO, "capped": CAPPED, "constant": CONSTANT, "bernoulli": BERNOULLI}
_LAW_NAMES = {v: k for k, v in _LAW_CODES.items()}


@njit(cache=True, inline="always")
def pack_site(pos, d):
    bits = 64 // d
    off = np.uint64(1) << np.uint64(bits - 1)
    if bits == 64:
        mask = np.uint64(0xFFFFFFFFFFFFFFFF)
    else:
        mask = (np.uint64(1) << np.uint64(bits)) - np.uint64(1)
    packed = np.uint64(0)
    for i in range(d):
        c = (np.uint64(pos[i]) + off) & mask
        packed |= c << np.uint64(bits * i)
    return packed


@njit(cache=True, inline="always")
def site_uniform(pos, d, k1, k2):
    return to_unit(mix64(mix64(pack_site(pos, d) + k1) ^ k2))


@njit(cache=True, inline="always")
def value_from_uniform(u, law, alpha, param):
    if law == 0:
        return math.exp(-math.log(u) / alpha)
    if law == 1:
        z = math.exp(-math.log(u) / alpha)
        return z if z < param else param
    if law == 2:
        return param
    # shifted law P(z > r) = (1 + r)^(-alpha); indicator of {z >= 1}
    return 1.0 if u <= math.exp(-alpha * math.log(2.0)) else 0.0


@njit(cache=True, inline="always")
def site_value(pos, d, law, alpha, param, k1, k2):
    if law == 2:
        return param
    return value_from_uniform(site_uniform(pos, d, k1, k2), law, alpha, param)


@dataclass(frozen=True)
class SceneryField:
    """I.i.d. scenery z on Z^d.

    Laws: ``pareto`` (P(z > r) = r^-alpha on [1, inf)), ``capped`` (pareto
    truncated at ``cap``), ``constant`` (z = ``value``) and ``bernoulli``
    (indicator of {z >= 1} under the shifted law P(z > r) = (1 + r)^-alpha).
    """

    seed: int
    alpha: float
    dimension: int
    law: str = "pareto"
    cap: float | None = None
    value: float | None = None
    _keys: tuple = dc_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.law not in _LAW_CODES:
            raise ValueError(f"unknown scenery law {self.law!r}")
        if self.dimension < 1 or self.dimension > 8:
            raise ValueError("dimension must be between 1 and 8")
        if self.law != "constant" and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.law == "capped" and (self.cap is None or self.cap < 1):
            raise ValueError("capped law needs cap >= 1")
        if self.law == "constant" and (self.value is None or self.value < 0):
            raise ValueError("constant law needs a nonnegative value")
        object.__setattr__(self, "_keys", (stream_key(self.seed, 1), stream_key(self.seed, 2)))

    @property
    def law_code(self):
        return _LAW_CODES[self.law]

    @property
    def param(self):
        if self.law == "capped":
            return float(self.cap)
        if self.law == "constant":
            return float(self.value)
        return 0.0

    def kernel_args(self):
        """Scalars consumed by the jitted kernels: (law, alpha, param, k1, k2)."""
        k1, k2 = self._keys
        return (self.law_code, float(self.alpha or 1.0), self.param, np.uint64(k1), np.uint64(k2))

    def mean(self):
        """E[z(0)] under the field's law (inf when it diverges)."""
        a = self.alpha
        if self.law == "constant":
            return float(self.value)
        if self.law == "pareto":
            return a / (a - 1.0) if a > 1 else math.inf
        if self.law == "capped":
            m = float(self.cap)
            if a == 1.0:
                return 1.0 + math.log(m)
            # E[min(z, M)] = 1 + int_1^M r^-a dr
            return 1.0 + (m ** (1.0 - a) - 1.0) / (1.0 - a)
        return 2.0 ** (-a)

    def with_law(self, law, **kw):
        return SceneryField(self.seed, self.alpha, self.dimension, law, kw.get("cap"), kw.get("value"))

    def to_json(self):
        out = {"seed": self.seed, "alpha": self.alpha, "law": self.law}
        if self.cap is not None:
            out["cap"] = self.cap
        if self.value is not None:
            out["value"] = self.value
        return out

    @classmethod
    def from_json(cls, obj, dimension):
        return cls(int(obj["seed"]), float(obj.get("alpha", 1.0)), int(dimension), obj.get("law", "pareto"),
                   obj.get("cap"), obj.get("value"))


def constant_field(value, dimension, seed=0):
    return SceneryField(seed, 1.0, dimension, "constant", value=float(value))


def _check_point(field, x):
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    if x.size != field.dimension:
        raise ValueError(f"point has {x.size} coordinates, field has dimension {field.dimension}")
    bits = 64 // field.dimension
    if bits < 64:
        lim = 1 << (bits - 1)
        if np.any(x < -lim) or np.any(x >= lim):
            raise ValueError(f"coordinate outside the addressable range [-{lim}, {lim})")
    return x


def site_uniform_at(field, x):
    x = _check_point(field, x)
    _, _, _, k1, k2 = field.kernel_args()
    return float(site_uniform(x, field.dimension, k1, k2))


def z_at(field, x):
    """Scenery value z(x)."""
    x = _check_point(field, x)
    return float(site_value(x, field.dimension, *field.kernel_args()))


@dataclass(frozen=True)
class Box:
    """Axis-aligned lattice box ``lo <= x <= hi`` (inclusive on both ends)."""

    lo: tuple
    hi: tuple

    @classmethod
    def cube(cls, radius, d):
        return cls((-radius,) * d, (radius,) * d)

    @property
    def dimension(self):
        return len(self.lo)

    @property
    def shape(self):
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    def size(self):
        return int(np.prod([max(0, s) for s in self.shape], dtype=np.int64))

    def contains(self, x):
        return all(l <= c <= h for c, l, h in zip(x, self.lo, self.hi))

    def points(self):
        return product(*(range(l, h + 1) for l, h in zip(self.lo, self.hi)))


@njit(cache=True)
def _box_scan(lo, shape, d, law, alpha, param, k1, k2, thresh, strict, collect, out):
    total = 1
    for s in shape:
        total *= s
    pos = np.empty(d, dtype=np.int64)
    count = 0
    for flat in range(total):
        rem = flat
        for i in range(d - 1, -1, -1):
            pos[i] = lo[i] + rem % shape[i]
            rem //= shape[i]
        z = site_value(pos, d, law, alpha, param, k1, k2)
        hit = z > thresh if strict else z >= thresh
        if hit:
            if collect:
                for i in range(d):
                    out[count, i] = pos[i]
            count += 1
    return count


@njit(cache=True)
def _box_values(lo, shape, d, law, alpha, param, k1, k2):
    total = 1
    for s in shape:
        total *= s
    out = np.empty(total)
    pos = np.empty(d, dtype=np.int64)
    for flat in range(total):
        rem = flat
        for i in range(d - 1, -1, -1):
            pos[i] = lo[i] + rem % shape[i]
            rem //= shape[i]
        out[flat] = site_value(pos, d, law, alpha, param, k1, k2)
    return out


def _box_arrays(field, box):
    if box.dimension != field.dimension:
        raise ValueError("box dimension does not match the field")
    if box.size() == 0:
        raise ValueError("empty box")
    lo =np.asarray(box.lo, dtype=np.int64)
    _check_point(field, lo)
    _check_point(field, np.asarray(box.hi, dtype=np.int64))
    return lo, np.asarray(box.shape, dtype=np.int64)


def box_values(field, box):
    """All z values in ``box``, lexicographic order (last coordinate fastest)."""
    lo, shape = _box_arrays(field, box)
    return _box_values(lo, shape, field.dimension, *field.kernel_args())


def empirical_tail(field, box, r):
    """Fraction of sites in ``box`` with z(x) > r."""
    if not r > 0:
        raise ValueError("r must be positive")
    lo, shape = _box_arrays(field, box)
    dummy = np.empty((0, field.dimension), dtype=np.int64)
    n = _box_scan(lo, shape, field.dimension, *field.kernel_args(), float(r), True, False, dummy)
    return n / box.size()


def level_set_points(field, threshold, box):
    """Sites of ``box`` with z(x) >= threshold, in lexicographic order."""
    lo, shape = _box_arrays(field, box)
    args = field.kernel_args()
    dummy = np.empty((0, field.dimension), dtype=np.int64)
    n = _box_scan(lo, shape, field.dimension, *args, float(threshold), False, False, dummy)
    out = np.empty((n, field.dimension), dtype=np.int64)
    _box_scan(lo, shape, field.dimension, *args, float(threshold), False, True, out)
    return [tuple(int(c) for c in row) for row in out]


@dataclass(frozen=True)
class LevelSet:
    """{x : z(x) >= threshold}, optionally restricted to a box."""

    field: SceneryField
    threshold: float
    box: Box | None = None

    def __contains__(self, x):
        if self.box is not None and not self.box.contains(x):
            return False
        return z_at(self.field, x) >= self.threshold

    def points(self):
        if self.box is None:
            raise ValueError("an unrestricted level set cannot be enumerated")
        return level_set_points(self.field, self.threshold, self.box)


def max_site(field, box):
    """Site of ``box`` carrying the largest scenery value (first in lexicographic order on ties)."""
    vals = box_values(field, box)
    flat = int(np.argmax(vals))
    idx = np.unravel_index(flat, box.shape)
    return tuple(int(l + i) for l, i in zip(box.lo, idx)), float(vals[flat])


def dump_rows(field, box):
    """CSV rows ``x1,...,xd,z`` for every site of ``box``."""
    vals = box_values(field, box)
    for x, z in zip(box.points(), vals):
        yield ",".join(str(c) for c in x) + "," + repr(float(z))


@njit(cache=True)
def _values_at(pts, d, law, alpha, param, k1, k2):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = site_value(pts[i], d, law, alpha, param, k1, k2)
    return out


def values_at(field, points):
    """z at each row of an (n, d) integer array."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.int64).reshape(-1, field.dimension))
    if pts.shape[0]:
        _check_point(field, pts.min(axis=0))
        _check_point(field, pts.max(axis=0))
    return _values_at(pts, field.dimension, *field.kernel_args())
