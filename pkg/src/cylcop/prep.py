"""Preprocessing for real circular-linear records.

Tie-breaking perturbation (Epanechnikov noise for the linear channel, von
Mises noise for angles), hourly averaging of minute data, detection-limit
flagging. The Box-Cox transform lives in :mod:`cylcop.linear`.
"""
from dataclasses import dataclass
import math

import numpy as np

from .circular import TWO_PI, _rng, vm_sample, wrap_angle
from .errors import DomainError

__all__ = [
    "PerturbationSpec",
    "epanechnikov_quantile",
    "flag_detection_limit",
    "hourly_average",
    "perturb_circular",
    "perturb_linear",
    "robust_sigma",
]

# IQR of the standard normal
_IQR_NORMAL = 1.3489795003921634
_EPAN_HALF_WIDTH = math.sqrt(5.0)


@dataclass(frozen=True)
class PerturbationSpec:
    """Noise scales for tie-breaking.

    Linear: ``x + b_factor * sigma * n**exponent * eps`` with ``eps`` from the
    Epanechnikov kernel on ``(-sqrt 5, sqrt 5)`` (unit variance).
    Circular: ``theta + n**d_exponent * eps`` with ``eps ~ vM(0, noise_kappa)``.
    """

    b_factor: float = 1.3
    exponent: float = -1.0 / 3.0
    d_exponent: float = -1.0 / 3.0
    noise_kappa: float = 1.0
    seed: int = None

    def __post_init__(self):
        if not (self.b_factor > 0 and self.noise_kappa > 0):
            raise DomainError("perturbation factors must be positive")
        if not (math.isfinite(self.exponent) and math.isfinite(self.d_exponent)):
            raise DomainError("perturbation exponents must be finite")


def robust_sigma(sample):
    """Scale from the interquartile range, ``IQR / 1.349``."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 4:
        raise DomainError(f"robust_sigma needs at least 4 values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("robust_sigma needs finite values")
    q1, q3 = np.percentile(x, [25.0, 75.0])
    iqr = q3 - q1
    if not iqr > 0:
        raise DomainError("zero interquartile range: the sample is too heavily tied to perturb "
                          "(average or aggregate it first)")
    return float(iqr / _IQR_NORMAL)


def epanechnikov_quantile(p):
    """Quantile of the Epanechnikov kernel on ``(-sqrt 5, sqrt 5)``.

    The standard kernel on (-1, 1) has CDF ``(2 + 3s - s**3)/4``; the root of
    that cubic in (-1, 1) is ``2 sin(arcsin(2p - 1)/3)``.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError("probabilities must lie in [0, 1]")
    s = 2.0 * np.sin(np.arcsin(2.0 * p - 1.0) / 3.0)
    out = _EPAN_HALF_WIDTH * s
    return out if out.ndim else float(out)


def perturb_linear(sample, spec=None, rng=None):
    """Add scaled Epanechnikov noise, ``b = b_factor * sigma * n**exponent``.

    ``rng`` overrides ``spec.seed`` so callers can chain draws from one stream.
    """
    spec = spec or PerturbationSpec()
    x = np.asarray(sample, dtype=float).ravel()
    b = spec.b_factor * robust_sigma(x) * x.size ** spec.exponent
    gen = rng if rng is not None else _rng(spec.seed)
    eps = epanechnikov_quantile(gen.random(x.size))
    return x + b * np.atleast_1d(eps)


def perturb_circular(sample, spec=None, rng=None):
    """Add ``n**d_exponent`` times von Mises noise and wrap to [0, 2 pi)."""
    spec = spec or PerturbationSpec()
    theta = np.asarray(sample, dtype=float).ravel()
    if theta.size == 0:
        return theta.copy()
    d = theta.size ** spec.d_exponent
    gen = rng if rng is not None else _rng(spec.seed)
    eps = vm_sample(theta.size, 0.0, spec.noise_kappa, gen)
    # centre the noise on 0 rather than on [0, 2 pi)
    eps = np.where(eps > math.pi, eps - TWO_PI, eps)
    return np.asarray(wrap_angle(theta + d * eps), dtype=float).reshape(theta.shape)


def _hour_keys(timestamps):
    ts = np.asarray(timestamps)
    try:
        ts = ts.astype("datetime64[s]")
    except (TypeError, ValueError) as exc:
        raise DomainError(f"unparseable timestamps: {exc}") from None
    if ts.size > 1 and np.any(ts[1:] < ts[:-1]):
        i = int(np.flatnonzero(ts[1:] < ts[:-1])[0]) + 1
        raise DomainError(f"timestamps must be sorted; entry {i} ({ts[i]}) precedes its predecessor")
    return ts.astype("datetime64[h]")


def hourly_average(timestamps, values, circular=False):
    """Average values within each calendar hour.

    Returns ``(hours, means)`` with one entry per hour that holds at least one
    observation; empty hours are skipped. Angles (``circular=True``) use the
    mean direction. Single-observation hours pass through unchanged.
    """
    hours = _hour_keys(timestamps)
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size != hours.size:
        raise DomainError("timestamps and values differ in length")
    if vals.size == 0:
        return hours, vals.copy()
    starts = np.flatnonzero(np.r_[True, hours[1:] != hours[:-1]])
    counts = np.diff(np.r_[starts, vals.size])
    if circular:
        s = np.add.reduceat(np.sin(vals), starts)
        c = np.add.reduceat(np.cos(vals), starts)
        means = np.asarray(wrap_angle(np.arctan2(s, c)), dtype=float).reshape(-1)
        single = counts == 1
        means[single] = np.asarray(wrap_angle(vals[starts[single]]), dtype=float).reshape(-1)
    else:
        means = np.add.reduceat(vals, starts) / counts
        means[counts == 1] = vals[starts[counts == 1]]
    return hours[starts], means


def flag_detection_limit(values, limit):
    """Mask of values at or below the detection limit (no imputation)."""
    return np.asarray(values, dtype=float) <= float(limit)
