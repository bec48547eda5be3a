import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughlab.drifts import DiracComb
from roughlab.gaussian import (
    GridFunction,
    HeatKernelSpec,
    apply_semigroup,
    besov_norm_neg,
    gamma_density,
    heat_kernel,
    trapezoid_weights,
    unit_grid,
)

PER = HeatKernelSpec("periodic")
NEU = HeatKernelSpec("neumann")


def test_gamma_density_values():
    assert gamma_density(1.0, 0.0) == pytest.approx(0.3989422804014327, abs=1e-15)
    assert gamma_density(1.0, np.zeros(2), d=2) == pytest.approx(0.15915494309189535, abs=1e-15)


@given(st.floats(1e-3, 10.0), st.floats(-5.0, 5.0))
def test_gamma_density_even(t, x):
    assert gamma_density(t, x) == gamma_density(t, -x)


def test_gamma_density_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        gamma_density(0.0, 0.0)


@pytest.mark.parametrize("t", [1e-3, 0.01, 0.1, 1.0, 5.0])
@pytest.mark.parametrize("spec", [PER, NEU], ids=["periodic", "neumann"])
def test_interval_kernel_integrates_to_one(t, spec):
    ys = unit_grid(4097)
    w = trapezoid_weights(ys)
    for x in (0.0, 0.3, 0.77, 1.0):
        assert heat_kernel(t, x, ys, spec) @ w == pytest.approx(1.0, abs=1e-10)


def test_periodic_kernel_flat_for_large_time():
    # Fourier series: 1 + 2 sum_k e^{-2 pi^2 k^2 t} cos(2 pi k (x - y))
    xs = np.linspace(0, 1, 11)
    k = heat_kernel(10.0, xs[:, None], xs[None, :], PER)
    assert np.max(np.abs(k - 1.0)) < 1e-8


def test_periodic_kernel_matches_fourier_series():
    t, x, y = 0.02, 0.1, 0.65
    k = np.arange(1, 200)
    series = 1 + 2 * np.sum(np.exp(-2 * math.pi**2 * k**2 * t) * np.cos(2 * math.pi * k * (x - y)))
    assert heat_kernel(t, x, y, PER) == pytest.approx(series, rel=1e-12)


def test_neumann_kernel_matches_cosine_series():
    t, x, y = 0.05, 0.2, 0.9
    k = np.arange(1, 200)
    series = 1 + 2 * np.sum(np.exp(-0.5 * math.pi**2 * k**2 * t) * np.cos(math.pi * k * x) * np.cos(math.pi * k * y))
    assert heat_kernel(t, x, y, NEU) == pytest.approx(series, rel=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(1e-3, 2.0))
def test_neumann_kernel_symmetric(x, y, t):
    assert heat_kernel(t, x, y, NEU) == pytest.approx(heat_kernel(t, y, x, NEU), rel=1e-14)


def test_kernel_rejects_points_outside_interval():
    with pytest.raises(ValueError):
        heat_kernel(0.1, 1.5, 0.2, PER)


def _profile():
    return GridFunction.from_callable(lambda x: np.cos(2 * np.pi * x) + 0.5 * np.sin(4 * np.pi * x) ** 2)


def test_semigroup_identity_at_zero():
    f = _profile()
    assert np.array_equal(apply_semigroup(f, 0.0, PER).values, f.values)


@pytest.mark.parametrize("spec", [PER, NEU], ids=["periodic", "neumann"])
@pytest.mark.parametrize("method", ["spectral", "quadrature"])
def test_semigroup_fixes_constants(spec, method):
    f = GridFunction.from_callable(lambda x: np.full_like(x, 2.5))
    assert np.allclose(apply_semigroup(f, 0.3, spec, method).values, 2.5, atol=1e-12)


@pytest.mark.parametrize("spec", [PER, NEU], ids=["periodic", "neumann"])
def test_semigroup_property(spec):
    f = _profile()
    for t, r in [(0.01, 0.004), (0.1, 0.05), (1.0, 0.3)]:
        two = apply_semigroup(apply_semigroup(f, r, spec), t - r, spec).values
        one = apply_semigroup(f, t, spec).values
        assert np.max(np.abs(two - one)) < 1e-8


def test_spectral_eigenfunction_decay():
    f = GridFunction.from_callable(lambda x: np.cos(np.pi * x))
    out = apply_semigroup(f, 0.2, NEU).values
    assert np.allclose(out, np.exp(-0.5 * np.pi**2 * 0.2) * f.values, atol=1e-13)


def test_spectral_and_quadrature_agree():
    f = _profile()
    for spec in (PER, NEU):
        a = apply_semigroup(f, 0.05, spec).values
        b = apply_semigroup(f, 0.05, spec, method="quadrature").values
        assert np.max(np.abs(a - b)) < 1e-8


def test_besov_zero_and_homogeneity():
    zero = GridFunction.from_callable(np.zeros_like)
    assert besov_norm_neg(zero, -1.0, spec=PER) == 0.0
    f = _profile()
    n1 = besov_norm_neg(f, -0.5, spec=PER)
    assert besov_norm_neg(-3.0 * f, -0.5, spec=PER) == pytest.approx(3.0 * n1, rel=1e-12)


def test_besov_dirac_closed_form():
    # t^{1/2} G_t delta_0(0) = (2 pi)^{-1/2} for every t
    val = besov_norm_neg(DiracComb(np.array([0.0]), np.array([1.0])), -1.0)
    assert val == pytest.approx((2 * math.pi) ** -0.5, rel=1e-12)


def test_besov_rejects_nonnegative_alpha():
    with pytest.raises(ValueError):
        besov_norm_neg(_profile(), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.99, -0.01), st.floats(-10, 10))
def test_besov_homogeneity_property(alpha, c):
    f = _profile()
    assert besov_norm_neg(c * f, alpha, spec=NEU) == pytest.approx(abs(c) * besov_norm_neg(f, alpha, spec=NEU), rel=1e-9, abs=1e-300)
