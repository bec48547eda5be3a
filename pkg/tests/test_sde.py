import math
import warnings

import numpy as np
import pytest

from roughlab import fbm, sde
from roughlab.drifts import mollify, parse_drift


def _path(n_steps=256, H=0.25, paths=200, seed=3):
    return fbm.sample_fbm(n_steps, 1 / n_steps, H, seed=seed, n_paths=paths)


def _cfg(drift="dirac@0:mass=1", n=64, H=0.25, n_steps=256, x0=0.0):
    return sde.SdeConfig(x0, parse_drift(drift), n, H, n_steps)


def test_zero_drift_gives_shifted_fbm():
    p = _path()
    sol = sde.solve_euler(_cfg("zero", H=0.25), p)
    assert np.array_equal(sol.x_values, 0.0 + p.values)
    assert np.all(sol.psi_values == 0.0)


def test_constant_drift_psi_linear():
    p = _path()
    sol = sde.solve_euler(_cfg("smooth:const=1.5"), p)
    assert np.allclose(sol.psi_values[:, :, 0], 1.5 * p.times, rtol=0, atol=1e-13)


def test_reconstruction_is_exact():
    p = _path()
    sol = sde.solve_euler(_cfg(), p)
    assert np.array_equal(sol.x_values, sol.x0 + sol.psi_values + p.values)


def test_ou_strong_error_first_order():
    # dX = -X dt + dW, X_0 = 1: exact solution from the same Brownian path,
    # X_T = e^{-T} + sum over fine cells of e^{-(T - s)} dW (fine-grid oracle)
    fine = 2**14
    drv = fbm.sample_driver(400, fine, 1 / fine, seed=9)
    s = np.arange(fine) / fine
    exact = math.exp(-1.0) + drv.increments[:, :, 0] @ np.exp(-(1.0 - s - 0.5 / fine))
    errs = []
    for N in (64, 128, 256):
        k = fine // N
        inc = drv.increments[:, :, 0].reshape(400, N, k).sum(axis=2)[:, :, None]
        coarse = fbm.fbm_from_driver(fbm.BrownianDriver(1 / N, inc, drv.seeds), 0.5)
        sol = sde.solve_with(lambda x: -x, 1.0, coarse)
        errs.append(np.sqrt(np.mean((sol.x_values[:, -1, 0] - exact) ** 2)))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(0.8 < r < 1.2 for r in rates)


def test_nonfinite_state_raises_or_flags():
    p = _path(64, paths=5)
    blow = lambda x: np.where(np.abs(x) < 1e300, x * 1e200, np.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(sde.NumericalAbort):
            sde.solve_with(blow, 1.0, p)
        flagged = sde.solve_with(blow, 1.0, p, on_nonfinite="flag")
    assert flagged.failed.all()


def test_inadmissible_config_warns():
    with pytest.warns(RuntimeWarning):
        sde.SdeConfig(0.0, parse_drift("dirac@0:mass=1"), 64, 0.45)


def test_coupling_identity_when_drifts_agree():
    p = _path()
    cfg = _cfg()
    run = sde.coupled_pair(cfg, cfg.mollified, 0.0, 8.0, p)
    assert np.array_equal(run.X.x_values, run.Y_tilde.x_values)
    rep = sde.girsanov_tv_report(run)
    assert rep["pinsker"]["value"] == 0.0 and rep["gap_bound"]["value"] == 0.0


def test_coupling_shift_bound():
    p = _path()
    cfg = _cfg(n=256)
    run = sde.coupled_pair(cfg, mollify(cfg.drift, 16), 0.0, 16.0, p)
    shift = np.abs(run.B_tilde - p.values)[:, :, 0].max(axis=1)
    assert np.all(shift <= 16.0 * 1.0 * run.sup_gap() + 1e-12)


def test_coupling_gap_shrinks_with_smooth_g():
    p = _path(1024, paths=200)
    cfg = sde.SdeConfig(0.0, parse_drift("smooth:sin"), 64, 0.25, 1024)
    g = lambda x: np.sin(x) + 0.3
    gaps = [np.sqrt(np.mean(sde.coupled_pair(cfg, g, 0.0, lam, p, with_girsanov=False).sup_gap() ** 2)) for lam in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_coupling_guards():
    p = _path(16)
    with pytest.raises(ValueError):
        sde.coupled_pair(_cfg(n_steps=16), lambda x: x * 0, 0.0, 1.0, p)
    with pytest.raises(ValueError):
        sde.coupled_pair(_cfg(n_steps=16), lambda x: x * 0, 0.0, 16.0, p)


def test_gap_bound_tracks_lambda_times_gap():
    p = _path(1024, paths=200)
    cfg = _cfg(n=256, n_steps=1024)
    g = mollify(cfg.drift, 64)
    r8 = sde.girsanov_tv_report(sde.coupled_pair(cfg, g, 0.0, 8.0, p))
    r16 = sde.girsanov_tv_report(sde.coupled_pair(cfg, g, 0.0, 16.0, p))
    ratio = r16["gap_bound"]["value"] / r8["gap_bound"]["value"]
    gap_ratio = r16["sup_gap_l2"]["value"] / r8["sup_gap_l2"]["value"]
    assert ratio == pytest.approx(2.0 * gap_ratio, rel=1e-12)


def test_min_solution_cases():
    p = _path()
    lo = sde.solve_euler(_cfg("smooth:const=-1"), p)
    hi = sde.solve_euler(_cfg("smooth:const=1"), p)
    assert np.array_equal(sde.min_solution(lo, hi).x_values, lo.x_values)
    assert np.array_equal(sde.min_solution(hi, hi).x_values, hi.x_values)


def test_min_solution_requires_common_noise():
    a = sde.solve_euler(_cfg(), _path(seed=1))
    b = sde.solve_euler(_cfg(), _path(seed=2))
    with pytest.raises(ValueError):
        sde.min_solution(a, b)


def test_residual_cases():
    p = _path()
    cfg = _cfg("smooth:sin", n=64)
    sol = sde.solve_euler(cfg, p)
    # left-point integral reproduces the Euler recursion
    assert np.max(sde.residual(sol, cfg.mollified)) < 1e-12
    assert np.allclose(sde.residual(sol, lambda x: 0 * x), np.abs(sol.psi_values[:, :, 0]).max(axis=1))


def test_residual_decreases_jointly():
    p = _path(2048, paths=200)
    b = parse_drift("dirac@0:mass=1")
    res = []
    for n in (16, 64, 256):
        sol = sde.solve_with(mollify(b, n), 0.0, p)
        res.append(sde.residual(sol, mollify(b, 2 * n)).mean())
    assert res[0] > res[1] > res[2]


def test_holder_seminorm_cases():
    t = np.linspace(0, 1, 65)
    assert sde.holder_seminorm_Lm(np.zeros((100, 65)), t, 0.75) == 0.0
    assert sde.holder_seminorm_Lm(np.tile(t, (100, 1)), t, 1.0) == pytest.approx(1.0)


def test_holder_seminorm_stable_in_n():
    # start off the atom: from x0 = 0 the first left-point step is the
    # deterministic b_n(0) dt, which grows like n^{1/2} on an unresolved grid
    p = _path(1024, paths=300)
    b = parse_drift("dirac@0:mass=1")
    vals = [sde.holder_seminorm_Lm(sde.solve_with(mollify(b, n), 0.5, p).psi_values, p.times, 0.75) for n in (16, 64, 256)]
    assert max(vals) / min(vals) < 1.15


def test_exp_weighted_closed_forms():
    p = _path(1024, paths=3)
    one = lambda x: np.ones_like(x)
    assert np.allclose(sde.exp_weighted_functional(one, 0.0, 0.0, p, 0.25, 0.75), 0.5)
    lam = 10.0
    val = sde.exp_weighted_functional(one, 0.0, lam, p, 0.0, 1.0)
    assert np.allclose(val, (1 - math.exp(-lam)) / lam, rtol=lam / 1024)
