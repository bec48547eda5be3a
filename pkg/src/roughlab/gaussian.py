"""Gaussian densities, interval heat kernels and the heat-semigroup norm surrogate.

Kernels are for the generator ``(1/2) d^2/dx^2``.  On ``[0, 1]`` the periodic
and Neumann kernels are built from image sums of the whole-line Gaussian;
the semigroup can be applied either by quadrature against these kernels or
spectrally (Fourier modes for periodic, cosine modes for Neumann).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft

DOMAIN_KINDS = ("whole_line", "periodic", "neumann")
DEFAULT_T_LEVELS = tuple(2.0**-k for k in range(17))
DEFAULT_GRID_POINTS = 257


@dataclass(frozen=True)
class HeatKernelSpec:
    """Which heat kernel to use and how to truncate it.

    Attributes
    ----------
    domain_kind : {"whole_line", "periodic", "neumann"}
    dim : int
        Dimension for the whole-line kernel; interval kernels are 1-d.
    image_truncation : int
        Image terms per side.  Raised automatically for large ``t``.
    spectral_modes : int
        Number of retained modes on the spectral route.
    """

    domain_kind: str = "periodic"
    dim: int = 1
    image_truncation: int = 8
    spectral_modes: int = 256

    def __post_init__(self):
        if self.domain_kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.domain_kind!r}")
        if self.image_truncation < 1 or self.spectral_modes < 1:
            raise ValueError("image_truncation and spectral_modes must be >= 1")
        if self.domain_kind != "whole_line" and self.dim != 1:
            raise ValueError("interval kernels are one-dimensional")

    def images_for(self, t: float) -> int:
        # dropped terms sit at distance >= n, tail ~ exp(-n^2 / 2t) < 1e-13
        return max(self.image_truncation, int(math.ceil(math.sqrt(60.0 * t))) + 1)


@dataclass
class GridFunction:
    """Values of a real function on a strictly increasing 1-d grid."""

    grid: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape[0] != self.values.shape[-1]:
            raise ValueError("grid and values must have matching trailing length")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @classmethod
    def from_callable(cls, func, grid=None) -> "GridFunction":
        grid = unit_grid() if grid is None else np.asarray(grid, dtype=float)
        return cls(grid, np.broadcast_to(func(grid), grid.shape).astype(float))

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, c * self.values)

    __rmul__ = __mul__


def unit_grid(n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid on ``[0, 1]`` including both endpoints."""
    return np.linspace(0.0, 1.0, n_points)


def gamma_density(t: float, x, d: int = 1) -> np.ndarray:
    """Centered Gaussian density with covariance ``t * I_d`` at ``x``.

    For ``d > 1`` the last axis of ``x`` holds the coordinates.
    """
    if not t > 0:
        raise ValueError(f"gamma_density needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if d == 1:
        sq = x * x
    else:
        if x.shape[-1] != d:
            raise ValueError(f"last axis of x must have length {d}")
        sq = np.sum(x * x, axis=-1)
    return (2.0 * math.pi * t) ** (-0.5 * d) * np.exp(-sq / (2.0 * t))


def _check_interval(*pts):
    for p in pts:
        p = np.asarray(p)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("interval kernels are defined on [0, 1] only")


def heat_kernel(t: float, x, y, spec: HeatKernelSpec = HeatKernelSpec()) -> np.ndarray:
    """Heat kernel ``p_t(x, y)`` for ``spec.domain_kind`` (broadcasts ``x``, ``y``)."""
    if not t > 0:
        raise ValueError(f"heat_kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.domain_kind == "whole_line":
        return gamma_density(t, x - y, spec.dim)
    _check_interval(x, y)
    n = np.arange(-spec.images_for(t), spec.images_for(t) + 1, dtype=float)
    diff = (x - y)[..., None]
    if spec.domain_kind == "periodic":
        return gamma_density(t, diff + n).sum(axis=-1)
    summ = (x + y)[..., None]
    return (gamma_density(t, diff + 2.0 * n) + gamma_density(t, summ + 2.0 * n)).sum(axis=-1)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _require_unit_grid(grid: np.ndarray):
    n = grid.shape[0] - 1
    if n < 2 or not np.allclose(grid, np.linspace(0.0, 1.0, n + 1), atol=1e-12):
        raise ValueError("spectral route needs a uniform grid on [0, 1] with both endpoints")


def _spectral_periodic(values: np.ndarray, t: float, modes: int) -> np.ndarray:
    core = values[..., :-1]
    n = core.shape[-1]
    coef = fft.rfft(core, axis=-1)
    k = np.arange(coef.shape[-1])
    mult = np.exp(-0.5 * (2.0 * math.pi * k) ** 2 * t)
    mult[k >= modes] = 0.0
    out = fft.irfft(coef * mult, n=n, axis=-1)
    return np.concatenate([out, out[..., :1]], axis=-1)


def _spectral_neumann(values: np.ndarray, t: float, modes: int) -> np.ndarray:
    coef = fft.dct(values, type=1, axis=-1)
    k = np.arange(coef.shape[-1])
    mult = np.exp(-0.5 * (math.pi * k) ** 2 * t)
    mult[k >= modes] = 0.0
    return fft.idct(coef * mult, type=1, axis=-1)


def apply_semigroup(
    f: GridFunction, t: float, spec: HeatKernelSpec = HeatKernelSpec(), method: str = "spectral"
) -> GridFunction:
    """Apply the heat semigroup at time ``t`` to a grid function.

    ``method`` is "spectral" or "quadrature" on the interval; the whole line
    always uses quadrature with ``f`` extended by zero outside its grid.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return GridFunction(f.grid, f.values.copy())
    if spec.domain_kind == "whole_line" or method == "quadrature":
        if spec.domain_kind != "whole_line":
            _check_interval(f.grid)
        w = trapezoid_weights(f.grid)
        ker = heat_kernel(t, f.grid[:, None], f.grid[None, :], spec)
        return GridFunction(f.grid, (f.values * w) @ ker.T)
    if method != "spectral":
        raise ValueError(f"unknown method {method!r}")
    _require_unit_grid(f.grid)
    if spec.domain_kind == "periodic":
        out = _spectral_periodic(f.values, t, spec.spectral_modes)
    else:
        out = _spectral_neumann(f.values, t, spec.spectral_modes)
    return GridFunction(f.grid, out)


def besov_norm_neg(
    f,
    alpha: float,
    t_levels: Sequence[float] | None = None,
    spec: HeatKernelSpec = HeatKernelSpec("whole_line"),
    grid: np.ndarray | None = None,
) -> float:
    """Heat-semigroup surrogate of the ``C^alpha`` norm for ``alpha < 0``.

    Returns ``max_t t^{-alpha/2} sup_x |G_t f(x)|`` over ``t_levels``.  ``f``
    is a :class:`GridFunction` or any drift object exposing ``heat(t, x)``
    and ``evaluation_grid()``; drifts are smoothed in closed form.
    """
    if alpha >= 0:
        raise ValueError("surrogate norm is only defined for negative regularity")
    levels = DEFAULT_T_LEVELS if t_levels is None else tuple(t_levels)
    if not levels:
        raise ValueError("t_levels must be nonempty")
    best = 0.0
    if isinstance(f, GridFunction):
        for t in levels:
            sm = apply_semigroup(f, t, spec).values
            best = max(best, t ** (-alpha / 2) * float(np.max(np.abs(sm))))
        return best
    x = f.evaluation_grid() if grid is None else np.asarray(grid, dtype=float)
    for t in levels:
        sm = np.asarray(f.heat(t, x))
        best = max(best, t ** (-alpha / 2) * float(np.max(np.abs(sm))))
    return best
