"""Numerical laboratory for SDEs and SHEs with distributional drift.

Fractional Brownian motion via its Volterra kernel, heat-semigroup
mollification of distributional drifts, Euler and spectral solvers,
generalized-coupling processes, Girsanov/Pinsker bounds and sewing-germ
integrators, plus an experiment harness that checks scaling exponents.
"""

__version__ = "0.1.0"
