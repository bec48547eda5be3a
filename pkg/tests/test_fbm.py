import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughlab import fbm

# Molchan-Golosov kernel at t = 1 by QUADPACK with algebraic endpoint
# weights (independent of the incomplete-beta antiderivative used here);
# the same quadrature gives int_0^1 K(1, s)^2 ds = 1 - 3e-13 (H = 0.25).
K_ORACLE = {
    0.25: {0.1: 0.8779485481735579, 0.5: 0.8203226237647527, 0.9: 1.159100845704951},
    0.4: {0.1: 0.9283684208103575, 0.5: 0.9525043010041967, 0.9: 1.1100990669233612},
}
# int_0^1 (1 - s)^{-3/4} s^{1/4} ds = B(5/4, 1/4), QUADPACK with algebraic weight
BETA_5_4_1_4 = 3.7081493546255357


@pytest.mark.parametrize("H", [0.25, 0.4])
def test_kernel_matches_quadrature_oracle(H):
    s = np.array(list(K_ORACLE[H]))
    want = np.array(list(K_ORACLE[H].values()))
    assert np.allclose(fbm.volterra_kernel(1.0, s, H), want, rtol=1e-10)


def _k2_weighted(s, H):
    return float(fbm.volterra_kernel(1.0, s, H)) ** 2 * (s * (1 - s)) ** 0.5


def test_kernel_square_integral_normalized():
    from scipy import integrate

    H = 0.25
    val, _ = integrate.quad(
        lambda s: _k2_weighted(min(max(s, 1e-14), 1 - 1e-14), H), 0, 1, weight="alg", wvar=(-0.5, -0.5)
    )
    assert val == pytest.approx(1.0, abs=1e-4)


def test_kernel_brownian_and_causal():
    s = np.linspace(0.05, 0.95, 7)
    assert np.all(fbm.volterra_kernel(1.0, s, 0.5) == 1.0)
    assert np.all(fbm.volterra_kernel(0.5, np.array([0.6, 0.9]), 0.3) == 0.0)


def test_hurst_validation():
    for bad in (0.0, 0.55, 1.0, -0.1):
        with pytest.raises(ValueError):
            fbm.HurstIndex(bad)


@pytest.mark.parametrize("H", [0.25, 0.4])
def test_table_rows_have_exact_variance(H):
    tab = fbm.kernel_table(H, 256)
    var = tab.dt * (tab.entries**2).sum(axis=1)
    assert np.allclose(var[1:], tab.times[1:] ** (2 * H), rtol=1e-12)


def test_brownian_case_is_cumsum():
    p = fbm.sample_fbm(64, 1 / 64, 0.5, seed=3, n_paths=5)
    cum = np.concatenate([np.zeros((5, 1, 1)), np.cumsum(p.driver.increments, axis=1)], axis=1)
    assert np.array_equal(p.values, cum)


def test_paths_reproducible_and_chunk_invariant():
    a = fbm.sample_fbm(128, 1 / 128, 0.3, seed=11, n_paths=10)
    again = fbm.sample_fbm(128, 1 / 128, 0.3, seed=11, n_paths=10)
    b = fbm.sample_fbm(128, 1 / 128, 0.3, seed=11, n_paths=4, offset=6)
    assert np.array_equal(a.values, again.values)
    assert np.array_equal(a.driver.increments[6:], b.driver.increments)
    # the matrix product may round differently for another batch shape
    assert np.allclose(a.values[6:], b.values, rtol=0, atol=1e-13)


def test_terminal_variance_mc():
    H = 0.25
    p = fbm.sample_fbm(256, 1 / 256, H, seed=5, n_paths=10_000)
    x = p.values[:, -1, 0] ** 2
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1.0) < 3 * se


def test_increment_variance_mc():
    H = 0.25
    p = fbm.sample_fbm(256, 1 / 256, H, seed=6, n_paths=10_000)
    d = (p.values[:, 192, 0] - p.values[:, 64, 0]) ** 2
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert abs(d.mean() - 0.5 ** (2 * H)) < 3 * se


def test_conditional_mean_edges():
    p = fbm.sample_fbm(64, 1 / 64, 0.3, seed=1, n_paths=4)
    assert np.allclose(fbm.conditional_mean(p, 0.5, 0.5), p.values[:, 32], atol=1e-13)
    assert np.all(fbm.conditional_mean(p, 0.0, 0.75) == 0.0)


def test_conditional_mean_is_projection():
    # E[(B_r - E^s B_r) * dW_j] = 0 for driver increments before s
    p = fbm.sample_fbm(64, 1 / 64, 0.3, seed=2, n_paths=20_000)
    resid = p.values[:, 48, 0] - fbm.conditional_mean(p, 0.25, 0.75)[:, 0]
    cov = resid @ p.driver.increments[:, :16, 0] / p.n_paths
    assert np.max(np.abs(cov)) < 4 * math.sqrt(1 / 64) / math.sqrt(p.n_paths)


def test_residual_variance_lower_bound():
    H = 0.3
    tab = fbm.kernel_table(H, 256)
    R = tab.residual_variance()
    pairs = [(a, i) for a in (16, 64, 128) for i in (a + 4, a + 32, a + 100) if i <= 256]
    ratios = [R[i, a] / ((i - a) * tab.dt) ** (2 * H) for a, i in pairs]
    assert min(ratios) > 0.5


def test_table_save_load_roundtrip(tmp_path):
    tab = fbm.kernel_table(0.3, 32)
    f = tmp_path / "k.npz"
    tab.save(f)
    back = fbm.VolterraKernelTable.load(f)
    assert back.checksum() == tab.checksum()
    assert np.array_equal(back.entries, tab.entries)


def test_covariance_closed_form():
    c = fbm.fbm_covariance(np.array([0.5, 1.0]), 0.25)
    assert c[0, 1] == pytest.approx(0.5 * (0.5**0.5 + 1 - 0.5**0.5))


def test_girsanov_trivial_cases():
    t = np.linspace(0, 1, 65)
    assert np.all(fbm.girsanov_v(np.zeros(65), t, 0.25) == 0.0)
    beta = np.sin(3 * t)
    assert np.array_equal(fbm.girsanov_v(beta, t, 0.5), beta)


def test_girsanov_constant_shift_matches_beta_integral():
    t = np.linspace(0, 1, 1025)
    v = fbm.girsanov_v(np.ones_like(t), t, 0.25)
    assert v[-1] == pytest.approx(fbm.c_h(0.25) * BETA_5_4_1_4, rel=1e-4)


def test_calibrated_constant_close_to_closed_form():
    for H in (0.25, 0.4):
        assert fbm.c_h(H) == pytest.approx(fbm.c_h_reference(H), rel=2e-3)


def test_calibration_residual_small():
    for H in (0.25, 0.4):
        assert fbm.girsanov_residual(fbm.c_h(H), H) < 1e-3
    assert fbm.girsanov_residual(1.0, 0.5) < 1e-12


def test_pinsker_bound_cases():
    dt = 1 / 64
    assert fbm.pinsker_tv_bound(np.zeros((10, 65)), dt)[0] == 0.0
    assert fbm.pinsker_tv_bound(np.ones((10, 65)), dt)[0] == pytest.approx(0.5)


@settings(max_examples=20, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-3, 20), st.floats(-20, -1e-3)))
def test_pinsker_bound_homogeneous(c):
    v = np.random.default_rng(0).standard_normal((50, 33))
    b, _ = fbm.pinsker_tv_bound(v, 1 / 32)
    assert fbm.pinsker_tv_bound(c * v, 1 / 32)[0] == pytest.approx(abs(c) * b, rel=1e-10, abs=1e-300)


def test_csv_export_has_header_and_rows():
    p = fbm.sample_fbm(8, 1 / 8, 0.3, seed=0, n_paths=2)
    text = fbm.paths_to_csv(p, 1)
    lines = text.strip().splitlines()
    assert lines[0].startswith("t,value_0")
    assert len(lines) == 10
