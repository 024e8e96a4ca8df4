from fractions import Fraction
import math

import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from layerwalk import theory
from layerwalk.theory import OutOfRegime


def test_golden_table():
    rows = theory.check_golden()
    bad = [r for r in rows if not r[4]]
    assert not bad, bad
    assert len(rows) == len(theory.GOLDEN)


def test_exact_fractions():
    assert theory.s_exponent(1, Fraction(1, 2), exact=True) == Fraction(3, 2)
    assert theory.ondiag_exponent(1, 1, 0.5, exact=True) == Fraction(5, 4)
    assert theory.green_exponent(1, 2, 0.5, exact=True) == Fraction(-1)
    assert theory.moddev_exponent(1, 3, 1, 0.6, exact=True) - Fraction(3, 2) == Fraction(4, 5)
    assert isinstance(theory.s_exponent(2, 3), float)


def test_s_exponent_saturates():
    assert theory.s_exponent(1, 5) == 1.0
    assert theory.s_exponent(3, 2) == 1.0
    assert theory.s_exponent(3, 0.25) == 4.0


def test_alpha_one_is_accepted():
    assert theory.s_exponent(3, 1) == 1.0
    assert theory.green_exponent(1, 3, 1) == -2.0
    assert theory.moddev_exponent(1, 3, 1, 0.3) == 2.0


@pytest.mark.parametrize("call", [
    lambda: theory.moddev_exponent(1, 2, 0.5, 0.1),
    lambda: theory.moddev_exponent(1, 3, 1.5, 0.1),
    lambda: theory.moddev_exponent(1, 3, 1, 0.75),
    lambda: theory.green_exponent(1, 1, 1),
    lambda: theory.green_exponent(1, 1, 2),
    lambda: theory.csrw_spectral_dimension(1, 1, 1),
    lambda: theory.tail_exponent(2, 0.5, 2.5),
    lambda: theory.tail_exponent(3, 1, 1.6),
    lambda: theory.tail_exponent(3, 1, 0.9),
    lambda: theory.pareto_mean(1),
    lambda: theory.constants(1, 2, 0.8),
])
def test_out_of_regime(call):
    with pytest.raises(OutOfRegime):
        call()


def test_bad_alpha():
    with pytest.raises(ValueError):
        theory.s_exponent(1, 0)
    with pytest.raises(ValueError):
        theory.s_exponent(0, 1)


def test_tail_exponent_values():
    assert theory.tail_exponent(3, 1, 1.2) == pytest.approx(-0.2)
    assert theory.tail_exponent(3, 1, 1.2, pinned=True) == pytest.approx(-1.7)


def test_moddev_is_continuous_at_the_knee():
    # d2 = 3, alpha = 1: knee at delta = 1/2
    lo = theory.moddev_exponent(1, 3, 1, Fraction(1, 2), exact=True)
    assert lo == Fraction(2)
    hi = theory.moddev_exponent(1, 3, 1, Fraction(1, 2) + Fraction(1, 10**9), exact=True)
    assert abs(hi - lo) < Fraction(1, 10**8)


def test_green_exponent_matches_spectral_dimension_for_d2_ge_2():
    # gamma = 2 - d_s of the time-changed walk (transient case, d1 = 1)
    for d2, a in [(2, 0.5), (3, 2), (4, 0.7), (5, 1)]:
        assert theory.green_exponent(1, d2, a) == pytest.approx(2 - theory.csrw_spectral_dimension(1, d2, a) - 0)


def test_green_constant_gaussian_by_quadrature():
    for d2, m in [(2, 1.7), (3, 1.5), (4, 2.0)]:
        n = 7.0

        def f(t):
            return (4 * math.pi * m * t) ** -0.5 * (4 * math.pi * t) ** (-d2 / 2) * math.exp(-n * n / (4 * m * t))

        val = quad(f, 0, math.inf, limit=400)[0]
        assert val * n ** (d2 - 1) == pytest.approx(theory.green_constant_gaussian(d2, m), rel=1e-8)


def test_green_constants_differ_by_pi_power():
    for d2, m in [(2, 1.7), (3, 1.5), (5, 3.0)]:
        ratio = theory.green_constant_gaussian(d2, m) / theory.green_constant_stated(d2, m)
        assert ratio == pytest.approx(math.pi ** (-(d2 + 1) / 2), rel=1e-12)


def test_ondiag_constant_example():
    assert theory.constants(1, 1, 3)["ondiag_const"] == pytest.approx(0.06497, abs=1e-5)
    with pytest.raises(OutOfRegime):
        theory.constants(2, 1, 3)


@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20),
       st.integers(-20, 20), st.integers(-20, 20))
def test_intrinsic_distance_is_a_metric_shape(a, b, c, e, f, g):
    x, y, w = (a, (b,)), (c, (e,)), (f, (g,))
    dist = lambda p, q: theory.intrinsic_distance(1, 0.5, p, q)
    assert dist(x, y) == pytest.approx(dist(y, x))
    assert dist(x, x) == 0
    # s = 3/2 > 1 so |.|^{1/s} is subadditive
    assert dist(x, w) <= dist(x, y) + dist(y, w) + 1e-9


def test_intrinsic_distance_checks_dimension():
    with pytest.raises(ValueError):
        theory.intrinsic_distance(2, 1, (0, (0,)), (0, (0, 0)))


def test_table_row():
    row = theory.table_row(1, 1, 0.5)
    assert set(row) == set(theory.TABLE_FIELDS)
    assert row["green_exponent"] == pytest.approx(-1 / 3)
    assert row["ondiag_const"] is None
    row = theory.table_row(1, 1, 2)
    assert row["green_exponent"] is None and row["green_const_paper"] is None
    row = theory.table_row(1, 2, 3)
    assert row["green_const_derived"] == pytest.approx(1 / (4 * math.pi))


def test_params_mean():
    assert theory.TheoryParams(1, 1, 3).mean() == 1.5
    assert theory.TheoryParams(1, 1, 0.5, mean_z=2.0).mean() == 2.0
    with pytest.raises(OutOfRegime):
        theory.TheoryParams(1, 1, 0.5).mean()
