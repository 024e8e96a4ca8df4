import csv
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerwalk.rng import mix64_py
from layerwalk.scenery import (Box, LevelSet, SceneryField, box_values, constant_field, dump_rows,
                               empirical_tail, level_set_points, max_site, site_uniform_at, values_at, z_at)

DATA = Path(__file__).parent / "data" / "scenery_vectors.csv"


def _pack_py(x):
    d = len(x)
    bits = 64 // d
    off = 1 << (bits - 1)
    mask = (1 << bits) - 1 if bits < 64 else (1 << 64) - 1
    packed = 0
    for i, c in enumerate(x):
        packed |= ((c + off) & mask) << (bits * i)
    return packed


def _uniform_py(field, x):
    k1, k2 = field._keys
    h = mix64_py(mix64_py((_pack_py(x) + k1) & ((1 << 64) - 1)) ^ k2)
    return ((h >> 11) + 0.5) * 2.0**-53


def test_vector_file_reproduces_bit_exactly():
    with open(DATA) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 25
    for r in rows:
        cap = float(r["cap"]) if r["cap"] else None
        f = SceneryField(int(r["seed"]), float(r["alpha"]), int(r["dimension"]), r["law"], cap)
        x = tuple(int(c) for c in r["x"].split())
        assert site_uniform_at(f, x) == float(r["u"])
        assert z_at(f, x) == float(r["z"])
        assert _uniform_py(f, x) == float(r["u"])


def test_constant_law():
    f = constant_field(2.0, 3)
    assert z_at(f, (5, -1, 7)) == 2.0


def test_inverse_cdf_identity():
    f = SceneryField(11, 2.0, 2)
    for x in [(0, 0), (3, -4), (100, 7)]:
        u = site_uniform_at(f, x)
        assert z_at(f, x) == pytest.approx(u ** -0.5, rel=1e-15)


def test_cap_dominance_sitewise():
    f = SceneryField(4, 0.5, 2)
    g = f.with_law("capped", cap=10.0)
    box = Box.cube(20, 2)
    a, b = box_values(f, box), box_values(g, box)
    assert np.array_equal(b, np.minimum(a, 10.0))
    assert (a > 10).any()


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        z_at(SceneryField(1, 1.0, 2), (1, 2, 3))


def test_empirical_tail_trivial_cases():
    assert empirical_tail(constant_field(1.0, 2), Box.cube(3, 2), 2.0) == 0.0
    assert empirical_tail(SceneryField(2, 1.0, 2), Box.cube(5, 2), 1.0) == 1.0
    with pytest.raises(ValueError):
        empirical_tail(SceneryField(2, 1.0, 1), Box((1,), (0,)), 1.0)


def test_empirical_tail_binomial():
    box = Box.cube(500, 2)
    p = 4.0**-2
    se = math.sqrt(p * (1 - p) / box.size())
    assert abs(empirical_tail(SceneryField(8, 2.0, 2), box, 4.0) - p) <= 3 * se


def test_kolmogorov_smirnov_tail_law():
    f = SceneryField(21, 1.5, 2)
    z = np.sort(box_values(f, Box((0, 0), (999, 999))))
    n = z.size
    cdf = 1.0 - z**-1.5
    ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert ks < 1.949 / math.sqrt(n)  # 0.001 critical value


def test_level_set_constant():
    box = Box.cube(1, 2)
    assert len(level_set_points(constant_field(5.0, 2), 4.0, box)) == 9
    assert level_set_points(constant_field(5.0, 2), 6.0, box) == []


def test_level_set_count_binomial():
    t, rho = 4096, 1.2
    thr = t**rho
    box = Box.cube(128, 3)
    p = thr**-1.0
    n = len(level_set_points(SceneryField(3, 1.0, 3), thr, box))
    mean = box.size() * p
    assert abs(n - mean) <= 3 * math.sqrt(box.size() * p * (1 - p))


def test_level_set_exact_membership_and_order():
    f = SceneryField(5, 1.0, 2)
    box = Box((-6, -4), (5, 7))
    pts = level_set_points(f, 3.0, box)
    brute = [x for x in box.points() if z_at(f, x) >= 3.0]
    assert pts == brute
    assert pts == sorted(pts)
    ls = LevelSet(f, 3.0, box)
    assert all(x in ls for x in pts)
    assert ls.points() == pts


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(1.0, 50.0))
def test_level_set_nesting(a, b):
    lo, hi = min(a, b), max(a, b)
    f = SceneryField(6, 0.7, 2)
    box = Box.cube(8, 2)
    assert set(level_set_points(f, hi, box)) <= set(level_set_points(f, lo, box))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63), st.lists(st.integers(-1000, 1000), min_size=3, max_size=3))
def test_determinism_any_site(seed, x):
    f = SceneryField(seed, 0.8, 3)
    g = SceneryField(seed, 0.8, 3)
    assert z_at(f, x) == z_at(g, x) >= 1.0


def test_distinct_sites_get_distinct_variates():
    f = SceneryField(1, 1.0, 2)
    u = box_values(f.with_law("pareto"), Box.cube(60, 2))
    assert np.unique(u).size == u.size


def test_values_at_and_max_site_and_dump():
    f = SceneryField(2, 1.0, 2)
    box = Box.cube(3, 2)
    pts = np.array(list(box.points()))
    assert np.array_equal(values_at(f, pts), box_values(f, box))
    x, z = max_site(f, box)
    assert z == box_values(f, box).max() and z_at(f, x) == z
    rows = list(dump_rows(f, box))
    assert len(rows) == 49 and rows[0].startswith("-3,-3,")


def test_bernoulli_law_rate():
    f = SceneryField(3, 1.0, 2, "bernoulli")
    v = box_values(f, Box.cube(200, 2))
    assert set(np.unique(v)) <= {0.0, 1.0}
    p = 0.5
    assert abs(v.mean() - p) < 4 * math.sqrt(p * (1 - p) / v.size)


def test_json_round_trip():
    f = SceneryField(9, 0.5, 3, "capped", cap=10.0)
    assert SceneryField.from_json(f.to_json(), 3) == f
