"""Empirical distances, path seminorms and log-log slope fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo quantity as ``(value, stderr, n)``."""

    value: float
    stderr: float
    n: int

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n}


def mean_estimate(samples) -> Estimate:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return Estimate(float(x.mean()), se, int(x.size))


def l2_norm_estimate(samples) -> Estimate:
    """``sqrt(E X^2)`` with a delta-method standard error."""
    sq = mean_estimate(np.asarray(samples, dtype=float) ** 2)
    val = math.sqrt(sq.value)
    se = 0.5 * sq.stderr / val if val > 0 else 0.0
    return Estimate(val, se, sq.n)


def _law(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empirical law needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("empirical law has non-finite samples")
    return x


def wasserstein1_1d(a, b, seed: int = 0) -> float:
    """W1 between two real empirical laws via sorted matching.

    Unequal sizes are handled by subsampling the larger sample without
    replacement (fixed ``seed``).
    """
    a, b = _law(a), _law(b)
    if a.size != b.size:
        rng = np.random.default_rng(seed)
        if a.size > b.size:
            a = rng.choice(a, b.size, replace=False)
        else:
            b = rng.choice(b, a.size, replace=False)
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def wasserstein1_1d_stderr(a, b) -> Estimate:
    """W1 of equal-size samples with a naive stderr of the matched gaps."""
    a, b = _law(a), _law(b)
    if a.size != b.size:
        raise ValueError("stderr version needs equal sample sizes")
    return mean_estimate(np.abs(np.sort(a) - np.sort(b)))


def sync_coupling_wbound(x_paths, y_paths) -> Estimate:
    """Mean of ``min(sup_t |X - Y|, 1)`` over pairs driven by the same noise.

    Paths are ``(P, N+1)`` or ``(P, N+1, d)``; row ``p`` of each is one pair.
    """
    x = np.asarray(x_paths, dtype=float)
    y = np.asarray(y_paths, dtype=float)
    if x.shape != y.shape or x.shape[0] == 0:
        raise ValueError("paired ensembles must have equal, nonzero shapes")
    gap = np.abs(x - y)
    if gap.ndim == 3:
        gap = np.linalg.norm(gap, axis=2)
    sup = gap.reshape(gap.shape[0], -1).max(axis=1)
    return mean_estimate(np.minimum(sup, 1.0))


def tv_histogram(a, b, bins: int = 64, value_range=None) -> float:
    """Binned total variation ``(1/2) sum |p_i - q_i|``.

    Default range is the pooled mean plus or minus five pooled standard deviations;
    samples outside it fall into the edge bins.
    """
    a, b = _law(a), _law(b)
    if value_range is None:
        pooled = np.concatenate([a, b])
        mu, sd = float(pooled.mean()), float(pooled.std())
        if sd == 0:
            return 0.0 if np.array_equal(np.unique(a), np.unique(b)) else 1.0
        value_range = (mu - 5 * sd, mu + 5 * sd)
    lo, hi = value_range
    edges = np.linspace(lo, hi, bins + 1)
    p = np.bincount(np.clip(np.searchsorted(edges, a, side="right") - 1, 0, bins - 1), minlength=bins) / a.size
    q = np.bincount(np.clip(np.searchsorted(edges, b, side="right") - 1, 0, bins - 1), minlength=bins) / b.size
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def p_variation(values, p: float) -> float:
    """Exact ``p``-variation over partitions made of grid points.

    ``V[j] = max_{i<j} V[i] + |x_j - x_i|^p`` by dynamic programming; returns
    ``V[N]^{1/p}``.  ``values`` may be ``(N+1,)`` or ``(N+1, d)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        return 0.0
    best = np.zeros(n)
    for j in range(1, n):
        inc = np.linalg.norm(x[j] - x[:j], axis=1) ** p
        best[j] = np.max(best[:j] + inc)
    return float(best[-1] ** (1.0 / p))


@dataclass(frozen=True)
class SlopeFit:
    xs: tuple
    ys: tuple
    slope: float
    intercept: float
    stderr: float
    r2: float

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi

    def as_dict(self) -> dict:
        return {
            "xs": list(self.xs),
            "ys": list(self.ys),
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r2": self.r2,
        }


def scaling_exponent(xs, ys) -> SlopeFit:
    """Least-squares slope of ``log y`` on ``log x``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least three (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    if np.unique(x).size != x.size:
        raise ValueError("abscissae must be distinct")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([slope, intercept])
    ss_res = float(resid @ resid)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    dof = x.size - 2
    sxx = float(((lx - lx.mean()) ** 2).sum())
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 else 0.0
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(tuple(x.tolist()), tuple(y.tolist()), float(slope), float(intercept), stderr, r2)


def holder_seminorm_lm(paths, times, kappa: float, m: float = 2.0, min_paths: int = 100) -> float:
    """``max_{s<t dyadic} ||f_t - f_s||_{L_m} / (t - s)^kappa`` over an ensemble.

    ``paths`` has shape ``(P, N+1[, d])``; pairs are all grid points at every
    dyadic resolution ``2^-k`` down to the grid step.
    """
    f = np.asarray(paths, dtype=float)
    if f.shape[0] < min_paths:
        raise ValueError(f"need at least {min_paths} paths, got {f.shape[0]}")
    if m < 2:
        raise ValueError("moment order must be >= 2")
    if f.ndim == 2:
        f = f[:, :, None]
    times = np.asarray(times, dtype=float)
    N = f.shape[1] - 1
    best = 0.0
    step = 1
    while step <= N:
        for start in range(0, N - step + 1, step):
            inc = np.linalg.norm(f[:, start + step] - f[:, start], axis=1)
            lm = float(np.mean(inc**m) ** (1.0 / m))
            best = max(best, lm / (times[start + step] - times[start]) ** kappa)
        step *= 2
    return best
