"""Linear (real-line) marginals: the normal family and Box-Cox."""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, FitError

__all__ = [
    "NormalParams",
    "boxcox",
    "boxcox_inverse",
    "normal_cdf",
    "normal_density",
    "normal_fit_ml",
    "normal_quantile",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class NormalParams:
    """Normal distribution; doubles as a linear marginal model."""

    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)) or self.sd <= 0:
            raise DomainError(f"invalid normal parameters mean={self.mean}, sd={self.sd}")

    def density(self, x):
        return normal_density(x, self.mean, self.sd)

    def cdf(self, x):
        return normal_cdf(x, self.mean, self.sd)

    def quantile(self, u):
        return normal_quantile(u, self.mean, self.sd)

    @property
    def scale(self):
        return self.sd


def _scalar(out):
    return out if np.ndim(out) else float(out)


def normal_density(x, mean=0.0, sd=1.0):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return _scalar(_INV_SQRT_2PI / sd * np.exp(-0.5 * z * z))


def normal_cdf(x, mean=0.0, sd=1.0):
    return _scalar(ndtr((np.asarray(x, dtype=float) - mean) / sd))


def normal_quantile(u, mean=0.0, sd=1.0):
    """Inverse normal CDF; levels 0 and 1 would be infinite and are rejected."""
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0) | ~(u < 1)):
        raise DomainError("normal quantile needs levels strictly inside (0, 1)")
    return _scalar(mean + sd * ndtri(u))


def normal_fit_ml(sample):
    """Sample mean and maximum likelihood (1/n) standard deviation."""
    sample = np.asarray(sample, dtype=float).ravel()
    if sample.size < 2:
        raise FitError("normal fit needs at least two values")
    if not np.all(np.isfinite(sample)):
        raise FitError("non-finite value in sample")
    sd = float(sample.std())
    if sd <= 0:
        raise FitError("degenerate sample: zero variance")
    return NormalParams(float(sample.mean()), sd)


def boxcox(x, lam):
    """Box-Cox power transform, ``(x**lam - 1)/lam`` or ``log x`` at ``lam == 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Box-Cox needs strictly positive values")
    if lam == 0:
        return _scalar(np.log(x))
    # expm1 keeps the lam -> 0 limit continuous
    return _scalar(np.expm1(lam * np.log(x)) / lam)


def boxcox_inverse(y, lam):
    y = np.asarray(y, dtype=float)
    if lam == 0:
        return _scalar(np.exp(y))
    base = lam * y
    if np.any(~(base > -1)):
        raise DomainError("value outside the range of the Box-Cox transform")
    return _scalar(np.exp(np.log1p(base) / lam))
