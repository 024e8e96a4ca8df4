import math

import numpy as np
import pytest
from scipy import stats as sps

from layerwalk import rwrs, sampling, walk
from layerwalk.scenery import SceneryField, constant_field, values_at, z_at
from layerwalk.walk import WalkPath


def _capped(d, seed=11, alpha=0.8, cap=50.0):
    return SceneryField(seed, alpha, d, "capped", cap=cap)


def test_clock_by_hand():
    f = _capped(1)
    p = WalkPath.from_jumps((0,), [(0.5, (1,)), (1.25, (2,)), (2.0, (1,))], 3.0)
    z0, z1, z2 = (z_at(f, (k,)) for k in range(3))
    got = rwrs.clock(p, f, [0.0, 1.0, 3.0], cap=2.0)
    assert got[0].a == 0.0
    assert got[1].a == pytest.approx(0.5 * z0 + 0.5 * z1)
    assert got[2].a == pytest.approx(0.5 * z0 + 0.75 * z1 + 0.75 * z2 + 1.0 * z1)
    assert got[2].truncated_a == pytest.approx(0.5 * min(z0, 2) + 1.75 * min(z1, 2) + 0.75 * min(z2, 2))


def test_clock_validates():
    p = walk.simulate_path(1, 2.0, 1)
    with pytest.raises(ValueError):
        rwrs.clock(p, _capped(1), [3.0])
    with pytest.raises(ValueError):
        rwrs.clock(p, _capped(1), [1.0, 0.5])
    with pytest.raises(ValueError):
        rwrs.clock(p, _capped(2), [1.0])


@pytest.mark.parametrize("cap", [1.0, 3.0, 20.0])
def test_truncation_identity(cap):
    f = _capped(2)
    p = walk.simulate_path(2, 40.0, 7)
    for s in [0.0, 5.0, 40.0]:
        (c,) = rwrs.clock(p, f, [s], cap=cap)
        assert c.truncated_a + rwrs.truncation_deficit(p, f, cap, s) == pytest.approx(cap * s, rel=1e-12)


def test_constant_field_clock_is_linear():
    b = sampling.run_walkers(constant_field(2.5, 3), [1.0, 100.0, 1000.0], 50, seed=3)
    assert np.allclose(b.clock, 2.5 * b.checkpoints[None, :], rtol=1e-13)


def test_batch_clock_matches_path_clock():
    # independent implementations: numba batch vs python sojourn sums
    f = _capped(2, alpha=1.5, cap=8.0)
    t = 20.0
    b = sampling.run_walkers(f, [t], 3000, seed=5)
    ref = [rwrs.clock(walk.simulate_path(2, t, (99, i)), f, [t])[0].a for i in range(3000)]
    assert sps.ks_2samp(b.clock[:, 0], ref).pvalue > 1e-3


def test_batch_prefix_property():
    f = _capped(3)
    a = sampling.run_walkers(f, [4.0, 8.0], 40, seed=2)
    b = sampling.run_walkers(f, [4.0, 8.0], 10, seed=2)
    assert np.array_equal(a.clock[:10], b.clock) and np.array_equal(a.position[:10], b.position)


def test_tail_trivial_cases():
    f = constant_field(2.0, 3)
    grid = [4.0, 16.0, 64.0]
    s = rwrs.tail_estimate(3, f, 1.2, grid, 100)
    # 2 t >= t^1.2 iff t <= 2^5
    assert list(s.estimate) == [1.0, 1.0, 0.0]
    with pytest.raises(ValueError):
        rwrs.tail_estimate(2, f, 1.2, grid, 100)
    with pytest.raises(ValueError):
        rwrs.tail_estimate(3, f, 0.0, grid, 100)


def test_pinned_constant_field_is_the_kernel():
    # threshold below the clock: pinned probability is p_t(0, 0)
    f = constant_field(1.0, 1)
    grid = [2.0, 8.0]
    s = rwrs.tail_estimate(1, f, 0.5, grid, 20000, pinned=True, mode="splice", seed=4)
    for p in s.points:
        k = walk.kernel(1, p.t, [0])
        assert abs(p.estimate - k) <= 4 * p.stderr + 1e-12
    fz = rwrs.tail_estimate(1, f, 0.5, grid, 100, pinned=True, mode="factorized")
    assert fz.estimate == pytest.approx([walk.kernel(1, t, [0]) for t in grid])


def test_splice_agrees_with_indicator():
    f = _capped(1, alpha=0.5, cap=100.0)
    grid = [4.0, 16.0]
    ind = rwrs.tail_estimate(1, f, 1.1, grid, 200000, pinned=True, mode="indicator", seed=8)
    spl = rwrs.tail_estimate(1, f, 1.1, grid, 20000, pinned=True, mode="splice", seed=8)
    for a, b in zip(ind.points, spl.points):
        assert abs(a.estimate - b.estimate) <= 4 * math.hypot(a.stderr, b.stderr)
        assert a.estimate > 0


def test_pinned_mode_checked():
    with pytest.raises(ValueError):
        rwrs.tail_estimate(1, _capped(1), 1.1, [2.0], 10, pinned=True, mode="magic")


def test_lower_threshold():
    f = SceneryField(1, 3.0, 2)
    assert rwrs.lower_threshold(2, f, 0.5, 16.0, "mean") == pytest.approx(16.0)
    assert rwrs.lower_threshold(1, SceneryField(1, 0.5, 1), 0.5, 16.0) == pytest.approx(16.0)
    with pytest.raises(ValueError):
        rwrs.lower_threshold(2, f, 2.0, 16.0, "mean")
    with pytest.raises(ValueError):
        rwrs.lower_threshold(2, f, 0.5, 16.0, "median")


def test_lower_deviation_constant_field():
    s = rwrs.lower_deviation_estimate(2, constant_field(1.0, 2), 0.1, [4.0, 8.0], 100, variant="mean")
    assert np.all(s.estimate == 0.0)


def test_lower_deviation_decreases():
    f = SceneryField(5, 3.0, 2)
    s = rwrs.lower_deviation_estimate(2, f, 0.4, [4.0, 16.0, 64.0], 4000, variant="mean", seed=1)
    e = s.estimate
    assert e[0] > e[-1]


def test_hitting_by_path():
    f = _capped(2, alpha=1.0, cap=1e6)
    t, rho, eps = 50.0, 1.2, 0.1
    thr = t ** (rho - 5 * eps)
    s = rwrs.hitting_estimate(2, f, rho, eps, [t], 4000, seed=6)
    ref = []
    for i in range(4000):
        p = walk.simulate_path(2, t, (77, i))
        ref.append(values_at(f, p.sites).max() >= thr)
    q = np.mean(ref)
    assert abs(s.estimate[0] - q) <= 4 * math.sqrt(q * (1 - q) * 2 / 4000)
    with pytest.raises(ValueError):
        rwrs.hitting_estimate(2, f, 0.5, 0.1, [t], 10)


def test_running_max_is_monotone():
    b = sampling.run_walkers(_capped(3), [1.0, 4.0, 16.0, 64.0], 200, seed=9)
    assert np.all(np.diff(b.running_max, axis=1) >= 0)
    assert np.all(b.running_max >= 1.0)


def test_returns_diagnostics():
    f = _capped(1, seed=21, alpha=0.5)
    p = walk.simulate_path(1, 200.0, 3)
    z = values_at(f, p.sites)
    thr = float(np.quantile(z, 0.7))
    r = rwrs.returns_diagnostics(p, f, thr)
    assert len(r.returns) == len(r.departures)
    seq = [v for pair in zip(r.returns, r.departures) for v in pair]
    assert all(b > a for a, b in zip(seq, seq[1:]))
    assert r.n_t == len(r.returns)
    assert r.level_local_time == pytest.approx(rwrs.level_local_time(p, f, thr))
    occ = walk.occupation(p)
    direct = math.fsum(v for x, v in occ.local_times.items() if z_at(f, x) >= thr)
    assert r.level_local_time == pytest.approx(direct)
