import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughlab import metrics


def test_w1_identical_and_point_masses():
    a = np.random.default_rng(0).standard_normal(100)
    assert metrics.wasserstein1_1d(a, a) == 0.0
    assert metrics.wasserstein1_1d(np.zeros(10), np.full(10, -2.5)) == 2.5


def test_w1_shifted_gaussians(rng):
    # with a well-separated shift every matched gap is positive, so the
    # estimate is the difference of sample means and its stderr is exact
    m = 2.0
    a = rng.standard_normal(10_000)
    b = rng.standard_normal(10_000) + m
    assert np.all(np.sort(b) > np.sort(a))
    se = math.sqrt((a.var(ddof=1) + b.var(ddof=1)) / a.size)
    assert abs(metrics.wasserstein1_1d(a, b) - m) < 3 * se


def test_w1_rejects_empty_and_nan():
    with pytest.raises(ValueError):
        metrics.wasserstein1_1d([], [1.0])
    with pytest.raises(ValueError):
        metrics.wasserstein1_1d([np.nan], [1.0])


def test_sync_bound_cases():
    x = np.random.default_rng(1).standard_normal((20, 9))
    assert metrics.sync_coupling_wbound(x, x).value == 0.0
    assert metrics.sync_coupling_wbound(x, x + 3.0).value == 1.0


def test_sync_bound_dominates_marginal_w1(rng):
    x = np.cumsum(rng.standard_normal((2000, 17)), axis=1) * 0.1
    y = x + 0.05 * rng.standard_normal((2000, 17))
    bound = metrics.sync_coupling_wbound(x, y)
    w = metrics.wasserstein1_1d(np.clip(x[:, -1], -10, 10), np.clip(y[:, -1], -10, 10))
    assert min(w, 1.0) <= bound.value + 2 * bound.stderr


def test_tv_cases(rng):
    a = rng.standard_normal(20_000)
    b = rng.standard_normal(20_000)
    assert metrics.tv_histogram(a, b) < 3 * math.sqrt(64 / 20_000)
    assert metrics.tv_histogram(a, a + 100.0, value_range=(-5, 105)) > 0.99


def test_tv_shifted_gaussians(rng):
    # 2 Phi(1/2) - 1, the exact TV between N(0,1) and N(1,1)
    a = rng.standard_normal(100_000)
    b = rng.standard_normal(100_000) + 1.0
    assert metrics.tv_histogram(a, b, bins=64) == pytest.approx(0.38292492254802624, abs=0.02)


def test_p_variation_basic_paths():
    assert metrics.p_variation(np.linspace(0, 3, 11), 1.0) == pytest.approx(3.0)
    jump = np.array([0, 0, 0, 2.5, 2.5])
    for p in (1.0, 2.0, 3.5):
        assert metrics.p_variation(jump, p) == pytest.approx(2.5)


def _brute_pvar(x, p):
    n = len(x)
    best = 0.0
    for r in range(2, n + 1):
        for pts in itertools.combinations(range(n), r):
            best = max(best, sum(abs(x[b] - x[a]) ** p for a, b in zip(pts, pts[1:])))
    return best ** (1 / p)


def test_p_variation_zigzag_matches_brute_force():
    h = 0.7
    zig = np.array([0, h, 0, h, 0, h, 0, h, 0])
    assert metrics.p_variation(zig, 1.0) == pytest.approx(8 * h)
    assert metrics.p_variation(zig, 1.0) == pytest.approx(_brute_pvar(zig, 1.0))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=8), st.floats(1.0, 4.0))
def test_p_variation_against_brute_force(xs, p):
    x = np.array(xs)
    assert metrics.p_variation(x, p) == pytest.approx(_brute_pvar(x, p), rel=1e-9, abs=1e-12)


def test_slope_exact_and_constant():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    fit = metrics.scaling_exponent(xs, xs**2)
    assert fit.slope == pytest.approx(2.0) and fit.stderr == pytest.approx(0.0, abs=1e-12)
    assert metrics.scaling_exponent(xs, np.full(4, 3.0)).slope == pytest.approx(0.0, abs=1e-12)


def test_slope_noisy_power_law(rng):
    xs = 2.0 ** np.arange(8)
    ys = xs**-0.75 * (1 + 0.05 * rng.standard_normal(8))
    assert abs(metrics.scaling_exponent(xs, ys).slope + 0.75) < 0.05


def test_slope_rejects_bad_input():
    with pytest.raises(ValueError):
        metrics.scaling_exponent([1, 2], [1, 2])
    with pytest.raises(ValueError):
        metrics.scaling_exponent([1, 2, 3], [1, 0, 2])
    with pytest.raises(ValueError):
        metrics.scaling_exponent([1, 1, 3], [1, 2, 2])


def test_holder_seminorm_cases():
    t = np.linspace(0, 1, 17)
    assert metrics.holder_seminorm_lm(np.zeros((100, 17)), t, 0.5) == 0.0
    assert metrics.holder_seminorm_lm(np.tile(t, (100, 1)), t, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        metrics.holder_seminorm_lm(np.zeros((10, 17)), t, 0.5)


def test_l2_estimate_delta_method(rng):
    x = rng.standard_normal(40_000) * 2.0
    e = metrics.l2_norm_estimate(x)
    assert abs(e.value - 2.0) < 3 * e.stderr
