"""Sampling from joint circular-linear models by conditional inversion.

1. draw ``(U, W)`` uniform, interleaved from one stream;
2. ``V = C_U^{-1}(W)`` with the copula's conditional inverse;
3. ``Theta = Psi^{-1}(U)``, ``X = F^{-1}(V)``.
"""
import numpy as np

from .circular import _rng
from .copulas import ReflectedCopula, invert_conditional
from .errors import CapabilityError, DomainError
from .joint import CylindricalSample

__all__ = ["GENERATOR_ID", "INVERSION_METHODS", "make_rng", "simulate", "simulate_copula_pairs"]

GENERATOR_ID = "numpy.random.PCG64"
INVERSION_METHODS = ("auto", "closed", "numeric", "mixture")
# keeps quantile arguments off the open ends of unbounded supports
_V_EPS = 2.0 ** -53


def make_rng(seed):
    """Generator for an integer seed (or pass an existing generator through)."""
    return _rng(seed)


def simulate_copula_pairs(copula, n, seed, method="auto"):
    """Draw ``n`` pairs ``(u, v)`` from a copula.

    ``method``: ``auto`` uses the copula's own inverse (closed form when it
    has one), ``closed`` insists on a closed form, ``numeric`` forces the
    generic bisection inverter, ``mixture`` samples a reflected copula
    component-wise from its base copula.
    """
    if method not in INVERSION_METHODS:
        raise DomainError(f"method must be one of {INVERSION_METHODS}, got {method!r}")
    if not (hasattr(copula, "conditional") and hasattr(copula, "density")):
        raise CapabilityError(f"{type(copula).__name__} has no conditional distribution to invert")
    n = int(n)
    if n < 0:
        raise DomainError("sample size must be >= 0")
    rng = make_rng(seed)
    if method == "mixture":
        if not isinstance(copula, ReflectedCopula) or not copula.base.closed_form_inverse:
            raise CapabilityError("mixture sampling needs a reflected copula with closed-form base inverse")
        return copula.sample_mixture(n, rng)
    uw = rng.random((n, 2))
    u = uw[:, 0]
    w = uw[:, 1]
    if n == 0:
        return u, w.copy()
    if method == "closed" and not copula.closed_form_inverse:
        raise CapabilityError(f"{type(copula).__name__} has no closed-form conditional inverse")
    if method == "numeric":
        v = invert_conditional(copula, u, w)
    else:
        v = copula.conditional_inverse(u, w)
    return u, np.asarray(v, dtype=float)


def simulate(model, n, seed, method="auto"):
    """Draw a :class:`CylindricalSample` of size ``n`` from a joint model."""
    for part, name in ((model.circular, "circular"), (model.linear, "linear")):
        if not hasattr(part, "quantile"):
            raise CapabilityError(f"{name} marginal has no quantile function")
    u, v = simulate_copula_pairs(model.copula, n, seed, method)
    v = np.clip(v, _V_EPS, 1.0 - _V_EPS)
    theta = np.asarray(model.circular.quantile(u), dtype=float)
    x = np.asarray(model.linear.quantile(v), dtype=float)
    return CylindricalSample(theta, x)
