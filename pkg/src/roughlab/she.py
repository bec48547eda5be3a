"""Stochastic heat equation on ``[0, 1]`` by spectral Galerkin with exact mode-wise noise.

The equation is ``du = (1/2) u'' dt + b(u) dt + dW`` with periodic or
Neumann boundary conditions.  Fields live in an orthonormal basis of
``L^2([0, 1])``:

* Neumann: ``1`` and ``sqrt(2) cos(pi k x)``, eigenvalue ``pi^2 k^2 / 2``;
* periodic: ``1``, ``sqrt(2) cos(2 pi k x)``, ``sqrt(2) sin(2 pi k x)``,
  eigenvalue ``2 pi^2 k^2``, ordered ``[c0, a1, b1, a2, b2, ...]``.

White noise projects onto independent Brownian motions, one per mode, so
the stochastic convolution is an exact OU recursion.  The drift is
evaluated on the physical grid and projected back (collocation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .drifts import DistributionalDrift, mollify
from .gaussian import GridFunction, HeatKernelSpec, apply_semigroup, heat_kernel, unit_grid
from .metrics import Estimate, l2_norm_estimate, mean_estimate, tv_histogram
from .seeding import member_rng

BCS = ("periodic", "neumann")


@dataclass(frozen=True)
class SpectralBasis:
    bc: str = "neumann"
    modes: int = 128
    n_points: int = 257

    def __post_init__(self):
        if self.bc not in BCS:
            raise ValueError(f"boundary condition must be one of {BCS}")
        n = self.n_points - 1
        if self.modes < 1 or n < 2 or n & (n - 1):
            raise ValueError("need modes >= 1 and 2^k + 1 grid points")
        top = self.modes - 1 if self.bc == "neumann" else self.modes // 2
        limit = n if self.bc == "neumann" else n // 2  # keep clear of the Nyquist mode
        if top >= limit:
            raise ValueError("too many modes for the grid")

    @property
    def grid(self) -> np.ndarray:
        return unit_grid(self.n_points)

    @property
    def h(self) -> float:
        return 1.0 / (self.n_points - 1)

    def wavenumbers(self) -> np.ndarray:
        j = np.arange(self.modes)
        if self.bc == "neumann":
            return j.astype(float)
        return ((j + 1) // 2).astype(float)

    def eigenvalues(self) -> np.ndarray:
        k = self.wavenumbers()
        if self.bc == "neumann":
            return 0.5 * (math.pi * k) ** 2
        return 2.0 * (math.pi * k) ** 2

    def basis_values(self, x) -> np.ndarray:
        """``e_j(x)`` for every mode, shape ``(..., modes)``."""
        x = np.asarray(x, dtype=float)[..., None]
        k = self.wavenumbers()
        j = np.arange(self.modes)
        if self.bc == "neumann":
            out = math.sqrt(2.0) * np.cos(math.pi * k * x)
        else:
            arg = 2.0 * math.pi * k * x
            out = math.sqrt(2.0) * np.where(j % 2 == 1, np.cos(arg), np.sin(arg))
        out[..., 0] = 1.0
        return out

    def synthesize(self, coef: np.ndarray) -> np.ndarray:
        """Grid values ``(..., n_points)`` from coefficients ``(..., modes)``."""
        coef = np.asarray(coef, dtype=float)
        n = self.n_points - 1
        if self.bc == "neumann":
            X = np.zeros(coef.shape[:-1] + (self.n_points,))
            X[..., 0] = coef[..., 0]
            X[..., 1 : self.modes] = coef[..., 1:] / math.sqrt(2.0)
            return fft.dct(X, type=1, axis=-1)
        Z = np.zeros(coef.shape[:-1] + (n // 2 + 1,), dtype=complex)
        Z[..., 0] = n * coef[..., 0]
        a = coef[..., 1::2]
        b = coef[..., 2::2]
        Z[..., 1 : 1 + a.shape[-1]] += n * a / math.sqrt(2.0)
        Z[..., 1 : 1 + b.shape[-1]] -= 1j * n * b / math.sqrt(2.0)
        core = fft.irfft(Z, n=n, axis=-1)
        return np.concatenate([core, core[..., :1]], axis=-1)

    def project(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid projection of grid values onto the retained modes."""
        values = np.asarray(values, dtype=float)
        h = self.h
        if self.bc == "neumann":
            Y = fft.dct(values, type=1, axis=-1)
            c = math.sqrt(2.0) * h * Y[..., : self.modes] / 2.0
            c[..., 0] = h * Y[..., 0] / 2.0
            return c
        U = fft.rfft(values[..., :-1], axis=-1)
        c = np.empty(values.shape[:-1] + (self.modes,))
        c[..., 0] = h * U[..., 0].real
        n_a = len(range(1, self.modes, 2))
        n_b = len(range(2, self.modes, 2))
        c[..., 1::2] = math.sqrt(2.0) * h * U[..., 1 : 1 + n_a].real
        c[..., 2::2] = -math.sqrt(2.0) * h * U[..., 1 : 1 + n_b].imag
        return c

    def semigroup_factor(self, t: float) -> np.ndarray:
        return np.exp(-self.eigenvalues() * t)


def _as_u0(u0, basis: SpectralBasis) -> np.ndarray:
    if isinstance(u0, GridFunction):
        vals = u0.values
    elif callable(u0):
        vals = np.broadcast_to(u0(basis.grid), basis.grid.shape).astype(float)
    else:
        vals = np.full(basis.n_points, float(u0))
    return basis.project(vals)


@dataclass
class SheConfig:
    drift: DistributionalDrift
    n_moll: float = 64
    bc: str = "neumann"
    modes: int = 128
    n_steps: int = 1024
    T: float = 1.0
    u0: object = 0.0
    seed: int = 0
    n_points: int = 257

    def __post_init__(self):
        if self.modes < 16:
            raise ValueError("need at least 16 modes")
        if self.drift.dim != 1:
            raise ValueError("SHE drifts are scalar")
        if not self.drift.nominal_alpha > -1.5:
            warnings.warn(f"alpha={self.drift.nominal_alpha} is outside the SHE weak regime", RuntimeWarning, stacklevel=2)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def basis(self) -> SpectralBasis:
        return SpectralBasis(self.bc, self.modes, self.n_points)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class NoiseModes:
    """Exact OU innovations ``xi[p, i, j]`` of mode ``j`` over step ``i`` for member ``p``."""

    dt: float
    xi: np.ndarray = field(repr=False)
    members: np.ndarray = field(repr=False)


def ou_innovation_sd(eigen: np.ndarray, dt: float) -> np.ndarray:
    sd = np.empty_like(eigen)
    pos = eigen > 0
    sd[pos] = np.sqrt(-np.expm1(-2.0 * eigen[pos] * dt) / (2.0 * eigen[pos]))
    sd[~pos] = math.sqrt(dt)
    return sd


def sample_noise(config: SheConfig, members, seed: int | None = None) -> NoiseModes:
    """Mode innovations for the given member indices, each from its own stream."""
    seed = config.seed if seed is None else seed
    members = np.atleast_1d(np.asarray(members, dtype=np.int64))
    sd = ou_innovation_sd(config.basis.eigenvalues(), config.dt)
    xi = np.empty((members.size, config.n_steps, config.modes))
    for p, m in enumerate(members):
        xi[p] = member_rng(seed, int(m)).standard_normal((config.n_steps, config.modes)) * sd
    return NoiseModes(config.dt, xi, members)


@dataclass
class SpaceTimeField:
    """Mode coefficients ``(P, n_times, modes)`` on a (possibly strided) time grid."""

    times: np.ndarray
    basis: SpectralBasis
    mode_state: np.ndarray = field(repr=False)

    @property
    def grid(self) -> np.ndarray:
        return self.basis.grid

    @property
    def values(self) -> np.ndarray:
        return self.basis.synthesize(self.mode_state)

    def slice_values(self, i: int) -> np.ndarray:
        return self.basis.synthesize(self.mode_state[:, i])

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        if not np.array_equal(self.times, other.times) or self.basis != other.basis:
            raise ValueError("fields live on different grids")
        return SpaceTimeField(self.times, self.basis, self.mode_state - other.mode_state)

    def to_csv(self, fh, member: int = 0) -> None:
        vals = self.slice_values_member(member)
        fh.write("t," + ",".join(f"x={float(x)!r}" for x in self.grid) + "\n")
        for t, row in zip(self.times, vals):
            fh.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")

    def slice_values_member(self, member: int) -> np.ndarray:
        return self.basis.synthesize(self.mode_state[member])


def _strided_times(config: SheConfig, store_every: int) -> np.ndarray:
    idx = np.arange(0, config.n_steps + 1, store_every)
    if idx[-1] != config.n_steps:
        idx = np.append(idx, config.n_steps)
    return idx


def sample_stochastic_convolution(config: SheConfig, noise: NoiseModes, store_every: int = 1) -> SpaceTimeField:
    """Linear SHE started at zero: each mode is an exact OU recursion."""
    basis = config.basis
    decay = basis.semigroup_factor(config.dt)
    idx = _strided_times(config, store_every)
    P = noise.xi.shape[0]
    out = np.zeros((P, idx.size, config.modes))
    c = np.zeros((P, config.modes))
    k = 1
    for i in range(config.n_steps):
        c = decay * c + noise.xi[:, i]
        if k < idx.size and idx[k] == i + 1:
            out[:, k] = c
            k += 1
    return SpaceTimeField(config.times[idx], basis, out)


def _check_finite(values: np.ndarray, step: int):
    bad = ~np.isfinite(values)
    if bad.any():
        p, node = np.argwhere(bad)[0][:2] if values.ndim > 1 else (0, int(np.argmax(bad)))
        raise FloatingPointError(f"non-finite SHE state at step {step}, node {int(node)} (member {int(p)})")


class MildStepper:
    """One exponential-Euler step ``c <- e^{-mu dt} (c + dt proj(drift(u))) + xi``.

    ``drift`` receives grid values ``(P, n_points)``; the optional ``push``
    receives the step index and the current coefficients and returns extra
    coefficients to be added inside the bracket (e.g. a projected coupling push).
    """

    def __init__(self, basis: SpectralBasis, dt: float, drift):
        self.basis = basis
        self.dt = dt
        self.drift = drift
        self.decay = basis.semigroup_factor(dt)

    def drift_modes(self, c: np.ndarray) -> np.ndarray:
        return self.basis.project(self.drift(self.basis.synthesize(c)))

    def step(self, c: np.ndarray, xi: np.ndarray, extra: np.ndarray | None = None) -> np.ndarray:
        inc = self.drift_modes(c)
        if extra is not None:
            inc = inc + extra
        return self.decay * (c + self.dt * inc) + xi


def _drift_callable(g):
    if isinstance(g, DistributionalDrift) and not callable(g):
        raise TypeError("pass a mollified drift or a callable")
    return lambda u: np.asarray(g(u), dtype=float)


def solve_mild(config: SheConfig, noise: NoiseModes, drift=None, store_every: int = 1) -> SpaceTimeField:
    """Mild solution under ``b_n`` (or an explicit callable ``drift``) with given noise."""
    basis = config.basis
    g = _drift_callable(mollify(config.drift, config.n_moll) if drift is None else drift)
    stepper = MildStepper(basis, config.dt, g)
    idx = _strided_times(config, store_every)
    P = noise.xi.shape[0]
    c = np.broadcast_to(_as_u0(config.u0, basis), (P, config.modes)).copy()
    out = np.zeros((P, idx.size, config.modes))
    out[:, 0] = c
    k = 1
    for i in range(config.n_steps):
        c = stepper.step(c, noise.xi[:, i])
        _check_finite(c, i + 1)
        if k < idx.size and idx[k] == i + 1:
            out[:, k] = c
            k += 1
    return SpaceTimeField(config.times[idx], basis, out)


def linear_part(config: SheConfig, times: np.ndarray) -> np.ndarray:
    """Coefficients of ``P_t u0`` at ``times``, shape ``(n_times, modes)``."""
    c0 = _as_u0(config.u0, config.basis)
    return np.exp(-np.outer(times, config.basis.eigenvalues())) * c0


@dataclass
class SheCouplingRun:
    u: SpaceTimeField
    v_tilde: SpaceTimeField
    lam: float

    @property
    def gap(self) -> SpaceTimeField:
        return self.u - self.v_tilde

    def beta_values(self) -> np.ndarray:
        return self.lam * self.gap.values


def coupled_field(config: SheConfig, g, lam: float, noise: NoiseModes, store_every: int = 1) -> SheCouplingRun:
    """``u`` under ``b_n`` and ``v~`` under ``g`` plus the push ``lam (u - v~)``, same noise."""
    if not config.dt < 0.5 / lam:
        raise ValueError(f"stiffness guard: need dt < 1/(2 lambda) = {0.5 / lam}")
    basis = config.basis
    b_step = MildStepper(basis, config.dt, _drift_callable(mollify(config.drift, config.n_moll)))
    g_step = MildStepper(basis, config.dt, _drift_callable(g))
    idx = _strided_times(config, store_every)
    P = noise.xi.shape[0]
    c0 = _as_u0(config.u0, basis)
    cu = np.broadcast_to(c0, (P, config.modes)).copy()
    cv = cu.copy()
    out_u = np.zeros((P, idx.size, config.modes))
    out_v = np.zeros_like(out_u)
    out_u[:, 0], out_v[:, 0] = cu, cv
    k = 1
    for i in range(config.n_steps):
        # the push is linear, so its projection is lam (cu - cv) exactly
        new_v = g_step.step(cv, noise.xi[:, i], lam * (cu - cv))
        cu = b_step.step(cu, noise.xi[:, i])
        cv = new_v
        _check_finite(cv, i + 1)
        if k < idx.size and idx[k] == i + 1:
            out_u[:, k], out_v[:, k] = cu, cv
            k += 1
    times = config.times[idx]
    return SheCouplingRun(SpaceTimeField(times, basis, out_u), SpaceTimeField(times, basis, out_v), float(lam))


def weighted_norm(f: SpaceTimeField, horizon: float = 2.0) -> np.ndarray:
    """Per-member ``sup_{t, x} |P_{horizon - t} f_t(x)|`` via the spectral route."""
    mu = f.basis.eigenvalues()
    damp = np.exp(-np.outer(horizon - f.times, mu))
    vals = f.basis.synthesize(f.mode_state * damp)
    return np.abs(vals).max(axis=(1, 2))


def weighted_slice(basis: SpectralBasis, coef: np.ndarray, t: float, horizon: float = 2.0) -> np.ndarray:
    """``sup_x |P_{horizon - t} f_t(x)|`` for one time slice, per member."""
    return np.abs(basis.synthesize(coef * basis.semigroup_factor(horizon - t))).max(axis=-1)


def sup_l2_norm(diff: SpaceTimeField) -> Estimate:
    """Empirical ``C^{0,0} L_2`` norm: ``max_{t, x} (E f_t(x)^2)^{1/2}``."""
    vals = diff.values
    ms = np.mean(vals**2, axis=0)
    i, j = np.unravel_index(np.argmax(ms), ms.shape)
    return l2_norm_estimate(vals[:, i, j])


def pinsker_bound_she(run: SheCouplingRun, min_runs: int = 100) -> dict:
    """``(1/2) lam Leb(D)^{1/2} ||u - v~||_{C^{0,0} L_2}`` and the raw KL term.

    The raw term is ``(1/2) (int_0^1 int_D E beta^2 dy dr)^{1/2}`` by Parseval.
    """
    P = run.u.mode_state.shape[0]
    if P < min_runs:
        raise ValueError(f"need at least {min_runs} coupled fields, got {P}")
    norm = sup_l2_norm(run.gap)
    bound = Estimate(0.5 * run.lam * norm.value, 0.5 * run.lam * norm.stderr, P)
    sq = (run.lam * run.gap.mode_state) ** 2
    per_t = sq.sum(axis=2)
    times = run.u.times
    dts = np.diff(times)
    q = (0.5 * (per_t[:, 1:] + per_t[:, :-1]) * dts).sum(axis=1)
    kl = mean_estimate(q)
    raw = 0.5 * math.sqrt(kl.value)
    raw_se = 0.25 * kl.stderr / math.sqrt(kl.value) if kl.value > 0 else 0.0
    return {"lambda": run.lam, "bound": bound.as_dict(), "kl_pinsker": Estimate(raw, raw_se, P).as_dict()}


def variance_series(basis: SpectralBasis, t: float, x) -> np.ndarray:
    """``sum_j (1 - e^{-2 mu_j t}) / (2 mu_j) e_j(x)^2`` (zero mode contributes ``t``)."""
    mu = basis.eigenvalues()
    w = np.empty_like(mu)
    pos = mu > 0
    w[pos] = -np.expm1(-2.0 * mu[pos] * t) / (2.0 * mu[pos])
    w[~pos] = t
    return basis.basis_values(x) ** 2 @ w


def kernel_lipschitz_check(t_levels, probes, spec: HeatKernelSpec = HeatKernelSpec("periodic"), n_points: int = 257):
    """``max_{probe, x != y} |P_t f(x) - P_t f(y)| t^{1/2} / |x - y|`` for each ``t``.

    Probes are callables on ``[0, 1]`` (rescaled to sup-norm 1 on the grid);
    the semigroup is applied by kernel quadrature.  Also returns the
    probe-free worst case ``max_{x != y} int |p_t(x, z) - p_t(y, z)| dz t^{1/2} / |x - y|``.
    """
    grid = unit_grid(n_points)
    dx = np.abs(grid[:, None] - grid[None, :])
    off = dx > 0
    per_level = []
    kernel_level = []
    for t in t_levels:
        if not t > 0:
            raise ValueError("t must be positive")
        best = 0.0
        for f in probes:
            vals = np.broadcast_to(f(grid), grid.shape).astype(float)
            m = float(np.max(np.abs(vals)))
            if m == 0:
                continue
            sm = apply_semigroup(GridFunction(grid, vals / m), t, spec, method="quadrature").values
            ratio = np.abs(sm[:, None] - sm[None, :])[off] / dx[off]
            best = max(best, float(ratio.max()) * math.sqrt(t))
        per_level.append(best)
        ker = heat_kernel(t, grid[:, None], grid[None, :], spec)
        w = np.full(n_points, grid[1] - grid[0])
        w[0] = w[-1] = 0.5 * w[0]
        l1 = (np.abs(ker[:, None, :] - ker[None, :, :]) * w).sum(axis=2)
        kernel_level.append(float((l1[off] / dx[off]).max()) * math.sqrt(t))
    return {"t_levels": list(t_levels), "probe_constant": per_level, "kernel_constant": kernel_level}


def regularization_functional(config: SheConfig, f, lambdas, noise: NoiseModes, x: float = 0.5, t_marks=()):
    """``int_0^T int_D e^{-lam (T - r)} p_{T-r}(x, y) f(V_r(y)) dy dr`` for each ``lam``.

    Evaluated on the fly in mode space: ``Z <- e^{-lam dt} e^{-mu dt} (Z + dt proj f(V))``.
    The unweighted version (``lam = 0``) is also read off at the times in
    ``t_marks``.  Returns ``(values[len(lambdas), P], marks[len(t_marks), P])``.
    """
    basis = config.basis
    lams = np.asarray(lambdas, dtype=float)
    dt = config.dt
    decay = basis.semigroup_factor(dt)
    ldecay = np.exp(-lams * dt)[:, None, None]
    ex = basis.basis_values(x)
    P = noise.xi.shape[0]
    c = np.zeros((P, config.modes))
    Z = np.zeros((lams.size, P, config.modes))
    Z0 = np.zeros((P, config.modes))
    mark_idx = {int(round(t / dt)): j for j, t in enumerate(t_marks)}
    marks = np.zeros((len(t_marks), P))
    for i in range(config.n_steps):
        proj = basis.project(np.asarray(f(basis.synthesize(c)), dtype=float))
        Z = ldecay * decay * (Z + dt * proj)
        Z0 = decay * (Z0 + dt * proj)
        c = decay * c + noise.xi[:, i]
        if i + 1 in mark_idx:
            marks[mark_idx[i + 1]] = Z0 @ ex
    return Z @ ex, marks


def weak_cauchy_gaps(config: SheConfig, levels, noise: NoiseModes, horizon: float = 2.0) -> np.ndarray:
    """Per-member ``||u^{(n_k)} - u^{(n_{k+1})}||_w`` for consecutive mollification levels.

    All levels run in lockstep on the same noise; the weighted sup is
    accumulated slice by slice so no field is stored.  Shape ``(len(levels) - 1, P)``.
    """
    basis = config.basis
    steppers = [MildStepper(basis, config.dt, _drift_callable(mollify(config.drift, n))) for n in levels]
    P = noise.xi.shape[0]
    c0 = _as_u0(config.u0, basis)
    cs = [np.broadcast_to(c0, (P, config.modes)).copy() for _ in levels]
    best = np.zeros((len(levels) - 1, P))
    for i in range(config.n_steps):
        cs = [st.step(c, noise.xi[:, i]) for st, c in zip(steppers, cs)]
        t = (i + 1) * config.dt
        for k in range(len(levels) - 1):
            best[k] = np.maximum(best[k], weighted_slice(basis, cs[k] - cs[k + 1], t, horizon))
    return best


def conditional_variance_series(basis: SpectralBasis, s: float, t: float, x) -> np.ndarray:
    """``Var(V_t(x) - E^s V_t(x))``: the series with ``t - s`` in place of ``t``."""
    return variance_series(basis, t - s, x)
