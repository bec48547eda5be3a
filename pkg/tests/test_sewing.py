import math

import numpy as np
import pytest
from scipy import integrate

from roughlab import fbm, metrics, sewing
from roughlab.drifts import mollify, parse_drift


def test_additive_germ_exact_at_every_level():
    germ = sewing.additive_germ(np.sin)
    _, rep = sewing.sew(germ, 0.2, 1.3, 10)
    assert np.allclose([float(s) for s in rep.sums], math.sin(1.3) - math.sin(0.2), rtol=0, atol=1e-14)
    assert rep.converged


def test_quadratic_germ_vanishes():
    val, rep = sewing.sew(sewing.quadratic_germ(), 0.0, 1.0, 12)
    assert float(val) == pytest.approx(2.0**-12)
    assert rep.defect_exponent == pytest.approx(1.0, abs=1e-9)
    assert rep.converged


def test_delta_defect_algebra():
    q = sewing.quadratic_germ()
    s, u, t = 0.1, 0.35, 0.9
    assert float(sewing.delta_defect(q, s, u, t)) == pytest.approx(2 * (u - s) * (t - u))
    assert float(sewing.delta_defect(sewing.additive_germ(np.exp), s, u, t)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        sewing.delta_defect(q, 0.5, 0.2, 0.9)


def test_left_point_germ_matches_riemann_sum_fine_grid():
    N = 2**14
    p = fbm.sample_fbm(N, 1 / N, 0.5, seed=2, n_paths=4)
    germ = sewing.left_point_germ(np.cos, p)
    val, _ = sewing.sew(germ, 0.0, 1.0, 14, min_level=14)
    direct = sewing.pathwise_integral(np.cos, 0.0, p, 0.0, 1.0)
    assert np.max(np.abs(val - direct)) < 1e-6


def test_left_point_germ_fractional_grid():
    p = fbm.sample_fbm(1024, 1 / 1024, 0.3, seed=2, n_paths=8)
    germ = sewing.left_point_germ(np.cos, p)
    val, _ = sewing.sew(germ, 0.0, 1.0, 10, min_level=10)
    assert np.allclose(val, sewing.pathwise_integral(np.cos, 0.0, p, 0.0, 1.0), rtol=0, atol=1e-12)


def test_conditional_germ_from_zero_is_gaussian_smoothing():
    H, N = 0.3, 256
    p = fbm.sample_fbm(N, 1 / N, H, seed=1, n_paths=3)
    phi0 = 0.4
    germ = sewing.conditional_drift_germ(parse_drift("smooth:sin"), phi0, p)
    t = 0.75
    # G_v sin = e^{-v/2} sin, with Var B_r = r^{2H}
    r = p.times[: int(t * N)]
    riemann = np.sum(np.exp(-0.5 * r ** (2 * H))) * p.dt * math.sin(phi0)
    assert np.allclose(germ(0.0, t), riemann, rtol=1e-12)
    exact, _ = integrate.quad(lambda u: math.exp(-0.5 * u ** (2 * H)), 0, t)
    assert riemann == pytest.approx(exact * math.sin(phi0), abs=2 / N)


def test_conditional_germ_constant_f():
    p = fbm.sample_fbm(64, 1 / 64, 0.3, seed=1, n_paths=3)
    germ = sewing.conditional_drift_germ(parse_drift("smooth:const=2.5"), 0.0, p)
    assert np.allclose(germ(0.25, 0.75), 2.5 * 0.5, rtol=1e-13)


def test_conditional_germ_uses_only_the_past():
    p = fbm.sample_fbm(128, 1 / 128, 0.3, seed=4, n_paths=2)
    germ = sewing.conditional_drift_germ(mollify(parse_drift("dirac@0:mass=1"), 64), 0.0, p)
    before = germ(0.25, 0.75)
    p.driver.increments[:, 32:] *= -3.0
    assert np.array_equal(germ(0.25, 0.75), before)


def test_conditional_defect_order_above_one():
    p = fbm.sample_fbm(1024, 1 / 1024, 0.3, seed=6, n_paths=200)
    f = mollify(parse_drift("dirac@0:mass=1"), 256)
    germ = sewing.conditional_drift_germ(f, p.times.copy(), p)
    hs = [2.0**-k for k in range(2, 7)]
    d = [metrics.l2_norm_estimate(germ.conditional_defect(0.25, 0.25 + h / 2, 0.25 + h)).value for h in hs]
    assert metrics.scaling_exponent(hs, d).slope > 1.0


def test_sewing_agrees_with_pathwise_integral_adapted_phi():
    p = fbm.sample_fbm(512, 1 / 512, 0.3, seed=8, n_paths=300)
    blocks = (np.arange(513) // 128) * 128
    phi = 0.5 * p.values[:, blocks, 0]
    f = parse_drift("smooth:sin")
    val, _ = sewing.sew(sewing.conditional_drift_germ(f, phi, p), 0.0, 1.0, 9, min_level=9)
    diff = metrics.mean_estimate(val - sewing.pathwise_integral(f, phi, p, 0.0, 1.0))
    assert abs(diff.value) < 3 * diff.stderr + 1e-12


def test_control_fit_cases():
    germ = sewing.additive_germ(np.sin)
    triples = [(0.0, 0.25, 0.5), (0.1, 0.2, 0.9), (0.3, 0.5, 0.6)]
    defects = [float(sewing.delta_defect(germ, *tr)) for tr in triples]
    assert sewing.control_power_check(defects, triples).exact_additivity

    p = fbm.sample_fbm(1024, 1 / 1024, 0.3, seed=6, n_paths=100)
    g = sewing.conditional_drift_germ(parse_drift("smooth:sin"), p.times.copy(), p)
    triples = [(0.25, 0.25 + h / 2, 0.25 + h) for h in (2.0**-k for k in range(1, 7))]
    defects = [metrics.l2_norm_estimate(g.conditional_defect(*tr)).value for tr in triples]
    fit = sewing.control_power_check(defects, triples)
    assert fit.superlinear and fit.exponent > 1.0


def test_controls_superadditive(rng):
    triples = [tuple(sorted(rng.uniform(0, 1, 3))) for _ in range(50)]
    assert sewing.superadditive(lambda s, t: t - s, triples)
    x = np.cumsum(rng.standard_normal(65))
    times = np.linspace(0, 1, 65)
    grid_triples = [(times[a], times[b], times[c]) for a, b, c in (sorted(rng.choice(65, 3, replace=False)) for _ in range(40))]

    def pvar_p(s, t):
        i, j = int(round(s * 64)), int(round(t * 64))
        return metrics.p_variation(x[i : j + 1], 2.0) ** 2

    assert sewing.superadditive(pvar_p, grid_triples)


def test_sew_rejects_bad_interval():
    with pytest.raises(ValueError):
        sewing.sew(sewing.quadratic_germ(), 1.0, 0.5, 3)
