"""Germs, dyadic sewing sums, delta-defects and the conditional drift germ for fBM.

A germ maps a pair ``(s, t)`` to a value (a scalar or one value per path).
Sewing sums the germ over dyadic partitions of ``[s, t]`` and watches the
increments between levels.  The conditional drift germ replaces
``int_s^t f(B_r + phi_s) dr`` by its conditional expectation given the
driver up to ``s``; for Gaussian ``B`` this is a heat-smoothed evaluation at
the conditional mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fbm import FbmPath
from .metrics import SlopeFit, p_variation, scaling_exponent


@dataclass
class Germ:
    """Two-parameter evaluator ``A(s, t)``; ``conditional`` marks ``F_s``-measurable germs."""

    evaluator: Callable
    conditional: bool = False
    name: str = "germ"

    def __call__(self, s: float, t: float):
        return np.asarray(self.evaluator(s, t), dtype=float)


def delta_defect(germ, s: float, u: float, t: float):
    """``A(s, t) - A(s, u) - A(u, t)``."""
    if not s <= u <= t:
        raise ValueError("need s <= u <= t")
    return germ(s, t) - germ(s, u) - germ(u, t)


@dataclass
class SewingReport:
    levels: list
    sums: list = field(repr=False)
    increments: list
    defect_exponent: float | None
    converged: bool

    def as_dict(self) -> dict:
        def _summ(x):
            x = np.asarray(x, dtype=float)
            return float(x) if x.ndim == 0 else {"mean": float(x.mean()), "n": int(x.size)}

        return {
            "levels": list(self.levels),
            "sums": [_summ(s) for s in self.sums],
            "increments": list(self.increments),
            "defect_exponent": self.defect_exponent,
            "converged": self.converged,
        }


def _size(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2))) if x.ndim else abs(float(x))


def sew(germ, s: float, t: float, max_level: int, min_level: int = 0, tol: float = 1e-13):
    """Dyadic Riemann sums ``S_k = sum_j A(t_j, t_{j+1})`` for ``k = min_level..max_level``.

    Increments ``|S_{k+1} - S_k|`` (root mean square over paths) are fitted
    against the mesh; the run is flagged as not converged when they fail to
    shrink geometrically over the last four levels.
    """
    if not s < t:
        raise ValueError("need s < t")
    if max_level < min_level:
        raise ValueError("max_level must be >= min_level")
    levels, sums = [], []
    for k in range(min_level, max_level + 1):
        pts = np.linspace(s, t, 2**k + 1)
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            total = total + germ(float(a), float(b))
        levels.append(k)
        sums.append(np.asarray(total, dtype=float))
    inc = [_size(sums[i + 1] - sums[i]) for i in range(len(sums) - 1)]
    scale = max(_size(x) for x in sums) or 1.0
    exponent = None
    nz = [(levels[i + 1], d) for i, d in enumerate(inc) if d > tol * scale]
    if len(nz) >= 3:
        mesh = [(t - s) * 2.0**-k for k, _ in nz]
        exponent = scaling_exponent(mesh, [d for _, d in nz]).slope
    tail = inc[-3:]
    if all(d <= tol * scale for d in tail):
        converged = True
    elif len(tail) < 3:
        converged = False
    else:
        converged = all(tail[i + 1] <= 0.9 * tail[i] for i in range(len(tail) - 1))
    return sums[-1], SewingReport(levels, sums, inc, exponent, converged)


def additive_germ(h: Callable) -> Germ:
    return Germ(lambda s, t: h(t) - h(s), name="additive")


def quadratic_germ() -> Germ:
    return Germ(lambda s, t: (t - s) ** 2, name="quadratic")


def left_point_germ(f: Callable, path: FbmPath) -> Germ:
    """``A(s, t) = f(B^H_s) (t - s)`` per path."""
    return Germ(lambda s, t: f(path.values[:, path.index_of(s), 0]) * (t - s), name="left_point")


def _phi_at(phi, a: int):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0:
        return phi
    if phi.ndim == 1:
        return phi[a]
    return phi[:, a]


class ConditionalDriftGerm(Germ):
    """``A(s, t) = sum_{s <= r_i < t} dt G_{sigma^2(s, r_i)} f(E^s B_{r_i} + phi_s)``.

    ``f`` must expose ``heat(t, x)`` (every drift does; a mollified drift at
    level ``n`` evaluates ``G_{t + 1/n} b``).  ``phi`` is a scalar, a
    deterministic ``(N+1,)`` path or an adapted ``(P, N+1)`` ensemble.
    The germ depends on the driver only through increments before ``s``.
    """

    def __init__(self, f, phi, path: FbmPath):
        self.f = f
        self.phi = phi
        self.path = path
        self.resvar = path.kernel.residual_variance()
        super().__init__(self._evaluate, conditional=True, name="conditional_drift")

    def conditional_means(self, a: int, b: int) -> np.ndarray:
        """``E[B_{r_i} | F_{t_a}]`` for ``a <= i < b``, shape ``(P, b - a)``."""
        if a == 0:
            return np.zeros((self.path.n_paths, b - a))
        K = self.path.kernel.entries[a:b, :a]
        return self.path.driver.increments[:, :a, 0] @ K.T

    def smoothed(self, a: int, b: int, shift) -> np.ndarray:
        m = self.conditional_means(a, b) + np.asarray(shift, dtype=float).reshape(-1, 1)
        var = self.resvar[a:b, a]
        out = np.empty_like(m)
        for j, v in enumerate(var):
            out[:, j] = self.f.heat(float(v), m[:, j])
        return out

    def _evaluate(self, s, t):
        a, b = self.path.index_of(s), self.path.index_of(t)
        if b == a:
            return np.zeros(self.path.n_paths)
        return self.smoothed(a, b, _phi_at(self.phi, a)).sum(axis=1) * self.path.dt

    def conditional_defect(self, s: float, u: float, t: float) -> np.ndarray:
        """``E^s delta A_{s,u,t}`` in closed form for a deterministic ``phi``.

        By the tower property ``E^s A_{u,t}`` smooths from ``s`` with ``phi_u``,
        so only the shift changes: ``sum_{u <= r_i < t} dt [G f(m + phi_s) - G f(m + phi_u)]``.
        """
        if np.asarray(self.phi).ndim > 1:
            raise ValueError("closed-form conditional defect needs a deterministic phi")
        a, c, b = self.path.index_of(s), self.path.index_of(u), self.path.index_of(t)
        if not a <= c <= b:
            raise ValueError("need s <= u <= t")
        if c == b:
            return np.zeros(self.path.n_paths)
        left = self.smoothed(a, b, _phi_at(self.phi, a))[:, c - a :]
        right = self.smoothed(a, b, _phi_at(self.phi, c))[:, c - a :]
        return (left - right).sum(axis=1) * self.path.dt


def conditional_drift_germ(f, phi, path: FbmPath) -> ConditionalDriftGerm:
    return ConditionalDriftGerm(f, phi, path)


def pathwise_integral(f, phi, path: FbmPath, s: float, t: float) -> np.ndarray:
    """Left-point ``int_s^t f(B_r + phi_r) dr`` per path (the direct oracle)."""
    a, b = path.index_of(s), path.index_of(t)
    B = path.values[:, a:b, 0]
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        B = B + phi[a:b]
    elif phi.ndim == 2:
        B = B + phi[:, a:b]
    else:
        B = B + phi
    return np.asarray(f(B), dtype=float).sum(axis=1) * path.dt


@dataclass
class ControlFit:
    exact_additivity: bool
    exponent: float | None
    fit: SlopeFit | None
    superlinear: bool

    def as_dict(self) -> dict:
        return {
            "exact_additivity": self.exact_additivity,
            "exponent": self.exponent,
            "superlinear": self.superlinear,
            "fit": None if self.fit is None else self.fit.as_dict(),
        }


def control_value(s: float, t: float, phi_values=None, times=None, p: float = 1.0, theta: float = 0.0) -> float:
    """``w(s, t) = (t - s)^{1/2} [phi]_{p-var; [s, t]}^theta`` (the second factor is 1 when ``theta = 0``)."""
    w = math.sqrt(t - s)
    if theta:
        i = int(np.searchsorted(times, s - 1e-12))
        j = int(np.searchsorted(times, t - 1e-12))
        w *= p_variation(np.asarray(phi_values)[i : j + 1], p) ** theta
    return w


def control_power_check(defects, triples, phi_values=None, times=None, p: float = 1.0, theta: float = 0.0, tol: float = 1e-14) -> ControlFit:
    """Fit ``|delta A_{s,u,t}| ~ w(s, t)^{1 + eps}`` over sampled triples.

    ``defects`` holds one (path-aggregated) defect size per triple ``(s, u, t)``.
    """
    d = np.abs(np.asarray(defects, dtype=float))
    if d.size == 0:
        raise ValueError("no defect samples")
    if np.all(d <= tol):
        return ControlFit(True, None, None, False)
    w = np.array([control_value(s, t, phi_values, times, p, theta) for s, _, t in triples])
    keep = (d > tol) & (w > 0)
    fit = scaling_exponent(w[keep], d[keep])
    return ControlFit(False, fit.slope, fit, fit.slope > 1.0)


def superadditive(w: Callable, triples, rtol: float = 1e-12) -> bool:
    """``w(s, u) + w(u, t) <= w(s, t)`` on every triple."""
    return all(w(s, u) + w(u, t) <= w(s, t) * (1 + rtol) + 1e-15 for s, u, t in triples)
