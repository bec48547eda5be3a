"""Distributional drifts, their heat-semigroup mollifications and parameter predicates.

Every drift exposes ``heat(t, x) = (G_t b)(x)``, the Gaussian smoothing at
variance ``t``.  Mollification at level ``n`` is ``b_n = G_{1/n} b``, so a
mollified drift is again a drift whose ``heat`` is shifted in time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .gaussian import DEFAULT_T_LEVELS, besov_norm_neg, gamma_density

_HERMITE_X, _HERMITE_W = np.polynomial.hermite_e.hermegauss(64)
_HERMITE_W = _HERMITE_W / _HERMITE_W.sum()


class DistributionalDrift:
    """Base class.  Subclasses implement :meth:`heat` and :meth:`support_points`."""

    nominal_alpha: float = -1.0
    dim: int = 1
    kind: str = "abstract"
    smooth: bool = False

    def heat(self, t: float, x) -> np.ndarray:
        raise NotImplementedError

    def support_points(self) -> np.ndarray:
        return np.zeros(0)

    def box_half_width(self) -> float:
        pts = self.support_points()
        return 6.0 + (float(np.max(np.abs(pts))) if pts.size else 0.0)

    def evaluation_grid(self, n_points: int = 4097) -> np.ndarray:
        if self.dim != 1:
            raise NotImplementedError("evaluation grids are one-dimensional")
        half = self.box_half_width()
        grid = np.linspace(-half, half, n_points)
        return np.unique(np.concatenate([grid, self.support_points()]))

    def mollify(self, n: float) -> "MollifiedDrift":
        return mollify(self, n)

    def __mul__(self, c: float) -> "DistributionalDrift":
        return ScaledDrift(self, float(c))

    __rmul__ = __mul__

    def __sub__(self, other: "DistributionalDrift") -> "DistributionalDrift":
        return SumDrift((self, other), (1.0, -1.0))

    def __add__(self, other: "DistributionalDrift") -> "DistributionalDrift":
        return SumDrift((self, other), (1.0, 1.0))

    def describe(self) -> dict:
        return {"kind": self.kind, "nominal_alpha": self.nominal_alpha, "dim": self.dim}


@dataclass(eq=False)
class DiracComb(DistributionalDrift):
    """Weighted point masses ``sum_i m_i delta_{x_i}`` (declared ``alpha = -d``).

    In ``d > 1`` the masses are vectors so the drift is ``R^d``-valued.
    """

    locations: np.ndarray
    masses: np.ndarray
    kind: str = field(default="dirac_comb", init=False)

    def __post_init__(self):
        self.locations = np.atleast_1d(np.asarray(self.locations, dtype=float))
        self.masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        self.dim = 1 if self.locations.ndim == 1 else self.locations.shape[1]
        if self.masses.shape[0] != self.locations.shape[0]:
            raise ValueError("one mass per location")
        self.nominal_alpha = -float(self.dim)

    def heat(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            dens = gamma_density(t, x[..., None] - self.locations)
            return dens @ self.masses
        dens = gamma_density(t, x[..., None, :] - self.locations, self.dim)
        return dens @ self.masses

    def support_points(self):
        return self.locations if self.dim == 1 else np.zeros(0)

    def describe(self):
        return {**super().describe(), "locations": self.locations.tolist(), "masses": self.masses.tolist()}


@dataclass(eq=False)
class UniformMeasure(DistributionalDrift):
    """Nonnegative measure with constant density on ``[a, b]`` and total ``mass``."""

    a: float = 0.0
    b: float = 0.5
    mass: float = 1.0
    kind: str = field(default="signed_measure", init=False)
    nominal_alpha: float = field(default=-1.0, init=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("need a < b")

    @property
    def nonnegative(self) -> bool:
        return self.mass >= 0

    def heat(self, t, x):
        x = np.asarray(x, dtype=float)
        dens = self.mass / (self.b - self.a)
        if t == 0:
            return np.where((x >= self.a) & (x <= self.b), dens, 0.0)
        s = math.sqrt(t)
        return dens * (ndtr((x - self.a) / s) - ndtr((x - self.b) / s))

    def support_points(self):
        return np.array([self.a, self.b])

    def describe(self):
        return {**super().describe(), "a": self.a, "b": self.b, "mass": self.mass}


@dataclass(eq=False)
class WeierstrassDerivative(DistributionalDrift):
    """Derivative of the lacunary ``gamma``-Hoelder function ``sum_k 2^{-k gamma} cos(2^k x)``.

    Declared regularity ``gamma - 1``; smoothing is exact mode by mode.
    """

    gamma: float = 0.3
    terms: int = 40
    kind: str = field(default="holder_derivative", init=False)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        self.nominal_alpha = self.gamma - 1.0
        k = np.arange(self.terms)
        self._freq = 2.0**k
        self._amp = 2.0 ** (k * (1.0 - self.gamma))

    def heat(self, t, x):
        x = np.asarray(x, dtype=float)
        damp = self._amp * np.exp(-0.5 * self._freq**2 * t)
        keep = damp > 1e-300
        return -(np.sin(x[..., None] * self._freq[keep]) @ damp[keep])

    def describe(self):
        return {**super().describe(), "gamma": self.gamma, "terms": self.terms}


@dataclass(eq=False)
class SmoothDrift(DistributionalDrift):
    """A smooth reference drift.  ``heat_func(t, x)`` may give ``G_t b`` in closed form;
    otherwise 64-point Gauss-Hermite quadrature is used."""

    func: Callable = None
    heat_func: Callable | None = None
    name: str = "smooth"
    kind: str = field(default="smooth", init=False)
    smooth: bool = field(default=True, init=False)
    nominal_alpha: float = field(default=-0.01, init=False)

    def __call__(self, x) -> np.ndarray:
        return self.heat(0.0, x)

    def heat(self, t, x):
        x = np.asarray(x, dtype=float)
        if t == 0:
            return np.broadcast_to(self.func(x), x.shape).astype(float)
        if self.heat_func is not None:
            return np.broadcast_to(self.heat_func(t, x), x.shape).astype(float)
        pts = x[..., None] + math.sqrt(t) * _HERMITE_X
        return self.func(pts) @ _HERMITE_W

    def describe(self):
        return {**super().describe(), "name": self.name}


@dataclass(eq=False)
class ScaledDrift(DistributionalDrift):
    source: DistributionalDrift = None
    factor: float = 1.0

    def __post_init__(self):
        self.kind = self.source.kind
        self.dim = self.source.dim
        self.nominal_alpha = self.source.nominal_alpha
        self.smooth = self.source.smooth

    def heat(self, t, x):
        return self.factor * self.source.heat(t, x)

    def support_points(self):
        return self.source.support_points()

    def describe(self):
        return {"kind": "scaled", "factor": self.factor, "source": self.source.describe()}


@dataclass(eq=False)
class SumDrift(DistributionalDrift):
    parts: Sequence[DistributionalDrift] = ()
    coefficients: Sequence[float] = ()

    def __post_init__(self):
        if len(self.parts) != len(self.coefficients) or not self.parts:
            raise ValueError("one coefficient per part")
        self.kind = "sum"
        self.dim = self.parts[0].dim
        self.nominal_alpha = min(p.nominal_alpha for p in self.parts)
        self.smooth = all(p.smooth for p in self.parts)

    def heat(self, t, x):
        return sum(c * p.heat(t, x) for p, c in zip(self.parts, self.coefficients))

    def support_points(self):
        pts = [p.support_points() for p in self.parts]
        return np.unique(np.concatenate(pts)) if pts else np.zeros(0)

    def describe(self):
        return {
            "kind": "sum",
            "coefficients": list(self.coefficients),
            "parts": [p.describe() for p in self.parts],
        }


@dataclass(eq=False)
class MollifiedDrift(DistributionalDrift):
    """``b_n = G_{1/n} b``; callable on points, and itself a (smooth) drift."""

    source: DistributionalDrift = None
    level: float = 1.0

    def __post_init__(self):
        if not self.level >= 1:
            raise ValueError("mollification level must be >= 1")
        self.kind = "mollified"
        self.dim = self.source.dim
        self.nominal_alpha = self.source.nominal_alpha
        self.smooth = True
        self.variance = 1.0 / self.level

    def __call__(self, x) -> np.ndarray:
        return self.source.heat(self.variance, x)

    def heat(self, t, x):
        return self.source.heat(t + self.variance, x)

    def support_points(self):
        return self.source.support_points()

    def lipschitz_estimate(self) -> float:
        x = self.evaluation_grid(20001)
        y = self(x)
        return float(np.max(np.abs(np.diff(y) / np.diff(x))))

    def describe(self):
        return {"kind": "mollified", "level": self.level, "source": self.source.describe()}


def mollify(b: DistributionalDrift, n: float) -> MollifiedDrift:
    """Gaussian mollification ``G_{1/n} b``."""
    return MollifiedDrift(b, float(n))


def c_alpha_minus_distance(b, g, alpha_prime: float, t_levels=None) -> float:
    """Surrogate ``C^{alpha'}`` distance between two drifts (``alpha' < 0``).

    Both drifts are smoothed in closed form at every surrogate level, which
    plays the role of a common fine mollification.
    """
    if alpha_prime >= 0:
        raise ValueError("alpha_prime must be negative")
    if alpha_prime >= min(b.nominal_alpha, g.nominal_alpha) and not (b.smooth and g.smooth):
        raise ValueError("alpha_prime must lie below the nominal regularity of both drifts")
    diff = SumDrift((b, g), (1.0, -1.0))
    return besov_norm_neg(diff, alpha_prime, DEFAULT_T_LEVELS if t_levels is None else t_levels)


def admissible_weak(alpha: float, H: float) -> bool:
    """Weak well-posedness regime ``alpha > 1/2 - 1/(2H)``."""
    return alpha > 0.5 - 0.5 / H


def admissible_strong_d1(alpha: float, H: float, nonneg_measure: bool) -> bool:
    """One-dimensional strong regime: ``(1 + alpha H)(alpha + 1/(2H)) > 1/2`` or a nonnegative measure."""
    return nonneg_measure or (1.0 + alpha * H) * (alpha + 0.5 / H) > 0.5


# catalog ------------------------------------------------------------------

def _smooth_catalog(name: str) -> SmoothDrift:
    if name == "sin":
        return SmoothDrift(np.sin, lambda t, x: np.exp(-0.5 * t) * np.sin(x), name="sin")
    if name == "zero":
        return SmoothDrift(np.zeros_like, lambda t, x: np.zeros_like(x), name="zero")
    m = re.fullmatch(r"linear=([-+0-9.eE]+)", name)
    if m:
        c = float(m.group(1))
        return SmoothDrift(lambda x: c * x, lambda t, x: c * x, name=name)
    m = re.fullmatch(r"const=([-+0-9.eE]+)", name)
    if m:
        c = float(m.group(1))
        return SmoothDrift(lambda x: np.full_like(x, c), lambda t, x: np.full_like(x, c), name=name)
    raise ValueError(f"unknown smooth drift {name!r}")


def parse_drift(drift_id: str) -> DistributionalDrift:
    """Build a drift from a catalog id.

    Accepted forms::

        dirac@0:mass=1            dirac@-0.5,0.5:mass=1,-1
        measure:uniform[0,0.5]    measure:uniform[0,0.5]:mass=2
        weierstrass:gamma=0.3:deriv
        smooth:sin  smooth:linear=-1  smooth:const=1  smooth:zero  zero
    """
    s = drift_id.strip()
    if s == "zero":
        return _smooth_catalog("zero")
    m = re.fullmatch(r"dirac@([^:]+)(?::mass=(.+))?", s)
    if m:
        locs = [float(v) for v in m.group(1).split(",")]
        masses = [float(v) for v in m.group(2).split(",")] if m.group(2) else [1.0] * len(locs)
        if len(masses) == 1 and len(locs) > 1:
            masses = masses * len(locs)
        return DiracComb(np.array(locs), np.array(masses))
    m = re.fullmatch(r"measure:uniform\[([^,\]]+),([^\]]+)\](?::mass=(.+))?", s)
    if m:
        mass = float(m.group(3)) if m.group(3) else 1.0
        return UniformMeasure(float(m.group(1)), float(m.group(2)), mass)
    m = re.fullmatch(r"weierstrass:gamma=([0-9.]+):deriv", s)
    if m:
        return WeierstrassDerivative(float(m.group(1)))
    if s.startswith("smooth:"):
        return _smooth_catalog(s[len("smooth:"):])
    raise ValueError(f"unknown drift id {drift_id!r}")


CATALOG = (
    "dirac@0:mass=1",
    "dirac@-0.5,0.5:mass=1,-1",
    "weierstrass:gamma=0.3:deriv",
    "weierstrass:gamma=0.5:deriv",
    "measure:uniform[0,0.5]",
    "smooth:sin",
    "smooth:linear=-1",
)
