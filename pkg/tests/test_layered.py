from collections import Counter
import math

import numpy as np
import pytest
from scipy import stats as sps
from scipy.integrate import quad

from layerwalk import layered, walk
from layerwalk.layered import LayeredModel
from layerwalk.oracle import GeneratorBox, REFLECTING, exact_green, exact_prob
from layerwalk.scenery import SceneryField, constant_field, z_at
from layerwalk.stats import EstimatePoint, EstimateSeries
from layerwalk.theory import OutOfRegime


def _model(d2=1, alpha=0.5, seed=3, cap=10.0):
    return LayeredModel(1, d2, SceneryField(seed, alpha, d2, "capped", cap=cap))


def _close(est, exact, k=4.0):
    assert abs(est.mean - exact) <= k * est.stderr + 1e-12, (est.mean, est.stderr, exact)


def test_model_validation():
    with pytest.raises(ValueError):
        LayeredModel(1, 2, SceneryField(1, 1.0, 1))
    with pytest.raises(ValueError):
        LayeredModel(0, 1, SceneryField(1, 1.0, 1))
    m = _model()
    z = z_at(m.field, (2,))
    assert m.conductance((5, 2), 0) == z and m.conductance((5, 2), 1) == 1.0
    assert m.exit_rate((2,)) == pytest.approx(2 * z + 2)


def test_time_zero():
    m = _model()
    assert layered.kernel_estimate(m, 0.0, ((0,), (0,)), 10).mean == 1.0
    assert layered.kernel_estimate(m, 0.0, ((1,), (0,)), 10).mean == 0.0
    with pytest.raises(ValueError):
        layered.kernel_estimate(m, -1.0, ((0,), (0,)), 10)
    with pytest.raises(ValueError):
        layered.kernel_estimate(m, 1.0, ((0, 0), (0,)), 10)
    with pytest.raises(ValueError):
        layered.kernel_estimate(m, 1.0, ((0,), (0,)), 10, mode="Magic")


@pytest.mark.parametrize("pinning", ["indicator", "splice"])
@pytest.mark.parametrize("target", [((0,), (0,)), ((3,), (0,)), ((1,), (-1,))])
def test_raoblackwell_matches_oracle(pinning, target):
    m = _model()
    exact = exact_prob(GeneratorBox.layered(m, 40), 3.0, (0, 0), (target[0][0], target[1][0]))
    _close(layered.kernel_estimate(m, 3.0, target, 100_000, pinning=pinning, seed=1), exact)


def test_gillespie_matches_oracle():
    m = _model()
    exact = exact_prob(GeneratorBox.layered(m, 40), 2.0, (0, 0), (0, 0))
    _close(layered.kernel_estimate(m, 2.0, ((0,), (0,)), 100_000, mode="DirectGillespie", seed=2), exact)


def test_constant_field_is_a_product_kernel():
    m = LayeredModel(1, 2, constant_field(2.0, 2))
    t, x1, x2 = 1.5, (2,), (1, 0)
    exact = walk.kernel(1, t, x1, rate=2.0) * walk.kernel(2, t, x2)
    _close(layered.kernel_estimate(m, t, (x1, x2), 50_000, seed=4), exact)
    assert layered.averaged_kernel(m, t, (x1, x2)) == pytest.approx(exact)
    fz = layered.kernel_estimate(m, t, (x1, x2), 10, mode="Factorized")
    assert fz.mean == pytest.approx(exact) and fz.stderr == 0.0


def test_timechange_and_gillespie_agree():
    m = LayeredModel(1, 1, SceneryField(7, 3.0, 1))
    n = 60_000
    a1, a2, _ = layered.timechange_samples(m, 2.0, n, seed=1)
    b1, b2, _ = layered.gillespie_samples(m, 2.0, n, seed=2)
    cta = Counter(map(tuple, np.hstack([a1, a2]).tolist()))
    ctb = Counter(map(tuple, np.hstack([b1, b2]).tolist()))
    keys = sorted(set(cta) | set(ctb))
    ca = np.array([cta[k] for k in keys])
    cb = np.array([ctb[k] for k in keys])
    big = (ca + cb) >= 20
    table = np.vstack([np.append(ca[big], ca[~big].sum()), np.append(cb[big], cb[~big].sum())])
    assert sps.chi2_contingency(table)[1] > 1e-3


def test_samplers_are_reproducible():
    m = _model()
    assert layered.sample_timechange(m, 5.0, 11) == layered.sample_timechange(m, 5.0, 11)
    assert layered.direct_gillespie(m, 5.0, (1, 2)) == layered.direct_gillespie(m, 5.0, (1, 2))
    assert len(layered.csrw_timechange(m, 5.0, 3)) == 2


def test_csrw_matches_oracle():
    m = _model(seed=5)
    gen = GeneratorBox.layered(m, 30, boundary=REFLECTING, csrw=True)
    t = 3.0
    x1, x2, binv, a = layered.csrw_samples(m, t, 100_000, seed=6)
    for tgt in [(0, 0), (1, 0), (0, 1)]:
        p = exact_prob(gen, t, (0, 0), tgt)
        hit = np.mean((x1[:, 0] == tgt[0]) & (x2[:, 0] == tgt[1]))
        assert abs(hit - p) <= 4 * math.sqrt(p * (1 - p) / x1.shape[0])
    assert np.all(binv <= t) and np.all(binv > 0)
    # B(B^{-1}(t)) = t
    assert np.allclose(2 * a + 2 * binv, t)


def test_killed_series_matches_box_oracle():
    m = LayeredModel(1, 2, SceneryField(2, 0.5, 2, "capped", cap=10.0))
    r = 3
    gen = GeneratorBox.layered(m, r)
    grid = [0.5, 1.0, 2.0, 4.0]
    for pinning in ["indicator", "splice"]:
        s = layered.pinned_series(m, grid, lambda _: [1], [0, 0], 40_000, seed=3, pinning=pinning, kill=r)
        for p in s.points:
            exact = exact_prob(gen, p.t, (0, 0, 0), (1, 0, 0))
            assert abs(p.estimate - exact) <= 4 * p.stderr + 1e-12, (pinning, p.t, p.estimate, exact)


def test_integrate_series_known_integral():
    # f(t) = t (1 + t)^-3 vanishes at 0, decays like t^-2 and integrates to 1/2
    ts = [2.0 ** (j / 8) for j in range(-32, 8 * 14 + 1)]
    pts = [EstimatePoint(t, t * (1 + t) ** -3, 0.0, 1, 1) for t in ts]
    g = layered.integrate_series(1, EstimateSeries(pts), decay=2.0)
    assert abs(g.value - 0.5) < 5e-4
    assert g.tail_mass > 0 and g.bias_bound >= g.tail_mass


def test_green_constant_field_matches_kernel_integral():
    m = LayeredModel(1, 2, constant_field(1.0, 2))
    n = 2
    exact = quad(lambda t: walk.kernel(3, t, (n, 0, 0)), 0, math.inf, limit=500)[0]
    g = layered.green_estimate(m, n, 20_000, seed=1)
    assert abs(g.value - exact) <= 4 * g.stderr + g.bias_bound


def test_killed_green_matches_oracle():
    m = LayeredModel(1, 2, SceneryField(2, 0.5, 2, "capped", cap=10.0))
    r, n = 4, 2
    exact = exact_green(GeneratorBox.layered(m, r), (0, 0, 0), (n, 0, 0))
    grid = layered.green_grid(8, 1.0)
    g = layered.green_estimate(m, n, 20_000, t_grid=grid, seed=2, kill=r)
    assert abs(g.value - exact) <= 4 * g.stderr + g.bias_bound


def test_green_recurrent_rejected():
    with pytest.raises(OutOfRegime):
        layered.green_estimate(LayeredModel(1, 1, SceneryField(1, 2.0, 1)), 4, 10)
    with pytest.raises(OutOfRegime):
        layered.green_estimate(LayeredModel(1, 1, constant_field(1.0, 1)), 4, 10)


def test_green_series_decreasing():
    m = LayeredModel(1, 2, constant_field(1.0, 2))
    s = layered.green_series(m, [1, 2, 4], 5000, seed=3)
    assert np.all(np.diff(s.estimate) < 0)


def test_rounded_target():
    assert layered.rounded_target(1024.0, 0.6) == [64]
    assert layered.rounded_target(1000.0, 0.5, 2) == [31, 0]


def test_moddev_constant_field_is_deterministic():
    m = LayeredModel(1, 3, constant_field(1.0, 3))
    s = layered.moddev_estimate(m, [16.0, 64.0], 0.5, 50)
    for p in s.points:
        assert p.estimate == pytest.approx(walk.kernel(1, p.t, [int(p.t**0.5)]))
        assert p.stderr == pytest.approx(0.0, abs=1e-15)


def test_lclt_constant_field():
    m = LayeredModel(1, 1, constant_field(1.5, 1))
    res = layered.lclt_ratio(m, 32.0, [((0,), (0,)), ((4,), (0,)), ((0,), (3,))], 20_000, seed=2)
    for _, r, se in res:
        assert abs(r - 1) <= 4 * se
    with pytest.raises(OutOfRegime):
        layered.lclt_ratio(LayeredModel(1, 1, SceneryField(1, 0.5, 1)), 8.0, [((0,), (0,))], 10)
