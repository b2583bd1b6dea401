"""Kernel estimators for the marginals.

Linear: Gaussian kernel, Sheather-Jones solve-the-equation bandwidth.
Circular: von Mises (exponential) kernel, likelihood cross-validation.
Each estimator's distribution function is the exact integral of its density,
so the two stay paired when composed into a joint density.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ive, ndtr

from . import _kernels
from .circular import TWO_PI, bessel_i0e, cumulative_table, wrap_angle
from .errors import BandwidthSelectionError, DomainError, FitError

__all__ = [
    "CircularKde",
    "LinearKde",
    "ckde_cdf",
    "ckde_density",
    "ckde_fit",
    "lcv_bandwidth",
    "lcv_objective",
    "lkde_cdf",
    "lkde_density",
    "lkde_fit",
    "sheather_jones",
    "silverman_bandwidth",
]

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SJ_BINS = 1000
_LCV_GRID = np.geomspace(0.05, 500.0, 60)
_REFINE_XTOL = 1e-4
# leave-one-out sums by Fourier series when orders * _FOURIER_COST <= n;
# rows whose sum falls below _FOURIER_FLOOR are recomputed pairwise
_FOURIER_COST = 4
_FOURIER_FLOOR = 1e-2
_PERTURB_HINT = "break ties first (cylcop prep --perturb)"


# --------------------------------------------------------------------------
# linear kernel density


@dataclass(frozen=True, eq=False)
class LinearKde:
    """Gaussian kernel density estimate with bandwidth ``h``."""

    observations: np.ndarray
    h: float
    kernel: str = field(default="gaussian", init=False)

    def __post_init__(self):
        obs = np.ascontiguousarray(self.observations, dtype=float).ravel()
        if obs.size == 0:
            raise FitError("kernel estimator needs observations")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError(f"bandwidth must be positive, got {self.h}")
        obs.flags.writeable = False
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "h", float(self.h))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.shape)
        for lo in range(0, flat.size, 1024):
            z = (flat[lo:lo + 1024, None] - self.observations[None, :]) / self.h
            out[lo:lo + 1024] = np.exp(-0.5 * z * z).mean(axis=1)
        out = (out * (_INV_SQRT_2PI / self.h)).reshape(x.shape)
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.shape)
        for lo in range(0, flat.size, 1024):
            z = (flat[lo:lo + 1024, None] - self.observations[None, :]) / self.h
            out[lo:lo + 1024] = ndtr(z).mean(axis=1)
        out = out.reshape(x.shape)
        return out if out.ndim else float(out)

    def quantile(self, u):
        """Numeric inverse of :meth:`cdf` by bisection; ``u`` strictly in (0, 1)."""
        u = np.asarray(u, dtype=float)
        if np.any(~(u > 0) | ~(u < 1)):
            raise DomainError("kernel quantile needs levels strictly inside (0, 1)")
        flat = u.ravel()
        lo = np.full(flat.shape, self.observations.min() - 40.0 * self.h)
        hi = np.full(flat.shape, self.observations.max() + 40.0 * self.h)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < flat
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-12 * np.maximum(1.0, np.abs(mid))):
                break
        out = (0.5 * (lo + hi)).reshape(u.shape)
        return out if out.ndim else float(out)

    @property
    def scale(self):
        return float(np.sqrt(self.observations.var() + self.h ** 2))


def _robust_scale(x):
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = (q75 - q25) / 1.349
    positive = [s for s in (sd, iqr) if s > 0]
    if not positive:
        raise BandwidthSelectionError(f"degenerate sample: zero spread; {_PERTURB_HINT}")
    return min(positive)


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    return 0.9 * _robust_scale(x) * x.size ** (-0.2)


def _sj_functional(width, counts, n, h, order):
    # binned estimate of psi_4 (order 4) or psi_6 (order 6) with bandwidth h
    delta = (np.arange(counts.size) * width / h) ** 2
    keep = delta < 1000.0
    delta = delta[keep]
    e = np.exp(-0.5 * delta) * counts[keep]
    if order == 4:
        total = 2.0 * float(np.sum(e * (delta * delta - 6.0 * delta + 3.0))) + 3.0 * n
        return total / (n * (n - 1) * h ** 5 * math.sqrt(2.0 * math.pi))
    total = 2.0 * float(np.sum(e * (delta ** 3 - 15.0 * delta ** 2 + 45.0 * delta - 15.0))) - 15.0 * n
    return total / (n * (n - 1) * h ** 7 * math.sqrt(2.0 * math.pi))


def sheather_jones(x):
    """Sheather-Jones solve-the-equation bandwidth for a Gaussian kernel.

    Pairwise distances are binned into 1000 classes as in R's ``bw.SJ``;
    the fixed-point equation is solved by bisection.  When no root can be
    bracketed the normal-reference (Silverman) bandwidth is returned and a
    warning is logged.
    """
    x = np.ascontiguousarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise BandwidthSelectionError("bandwidth selection needs at least two observations")
    scale = _robust_scale(x)
    if x.max() == x.min():
        raise BandwidthSelectionError(f"degenerate sample: all values equal; {_PERTURB_HINT}")
    width, counts = _kernels.pair_distance_counts(x, _SJ_BINS)

    a = 1.24 * scale * n ** (-1.0 / 7.0)
    b = 1.23 * scale * n ** (-1.0 / 9.0)
    c1 = 1.0 / (2.0 * math.sqrt(math.pi) * n)
    td = -_sj_functional(width, counts, n, b, 6)
    sda = _sj_functional(width, counts, n, a, 4)
    if not (td > 0 and sda > 0 and math.isfinite(td)):
        log.warning("Sheather-Jones pilot estimates failed; using Silverman's rule")
        return silverman_bandwidth(x)
    alpha2 = 1.357 * (sda / td) ** (1.0 / 7.0)

    def equation(h):
        sd = _sj_functional(width, counts, n, alpha2 * h ** (5.0 / 7.0), 4)
        if sd <= 0:
            return -h
        return (c1 / sd) ** 0.2 - h

    hmax = 1.144 * scale * n ** (-0.2)
    lower, upper = 0.1 * hmax, hmax
    f_lo, f_hi = equation(lower), equation(upper)
    tries = 0
    while f_lo * f_hi > 0:
        if tries >= 100:
            log.warning("Sheather-Jones equation has no bracketed root; using Silverman's rule")
            return silverman_bandwidth(x)
        if tries % 2 == 0:
            upper *= 1.2
            f_hi = equation(upper)
        else:
            lower /= 1.2
            f_lo = equation(lower)
        tries += 1
    for _ in range(200):
        mid = 0.5 * (lower + upper)
        f_mid = equation(mid)
        if f_mid == 0:
            return mid
        if f_mid * f_lo < 0:
            upper = mid
        else:
            lower, f_lo = mid, f_mid
        if upper - lower <= 1e-10 * upper:
            break
    return 0.5 * (lower + upper)


def lkde_fit(sample, bandwidth=None):
    """Fit a Gaussian kernel density; Sheather-Jones bandwidth unless given."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise FitError("kernel estimator needs at least two observations")
    if not np.all(np.isfinite(x)):
        raise FitError("non-finite value in sample")
    if bandwidth is None:
        bandwidth = sheather_jones(x)
    elif not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    return LinearKde(x, float(bandwidth))


def lkde_density(model, x):
    return model.density(x)


def lkde_cdf(model, x):
    return model.cdf(x)


# --------------------------------------------------------------------------
# circular kernel density


@dataclass(frozen=True, eq=False)
class CircularKde:
    """Circular kernel density with the exponential kernel ``L(t) = e^t``.

    With this kernel every observation contributes a von Mises bump of
    concentration ``nu``, so the normalising constant is ``1/(2 pi I0(nu))``.
    """

    observations: np.ndarray
    nu: float
    kernel: str = field(default="exponential", init=False)

    def __post_init__(self):
        obs = np.ascontiguousarray(wrap_angle(np.atleast_1d(np.asarray(self.observations, dtype=float))))
        if obs.size == 0:
            raise FitError("kernel estimator needs observations")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise DomainError(f"circular bandwidth must be positive, got {self.nu}")
        obs.flags.writeable = False
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "nu", float(self.nu))
        table = cumulative_table(self.nu)
        object.__setattr__(self, "_table", table)
        # mean of G(-theta_i): makes the distribution function start at angle 0
        object.__setattr__(self, "_offset", float(_kernels.shifted_cdf_mean(np.zeros(1), obs, *table)[0]))

    @property
    def c0(self):
        return math.exp(-self.nu) / (TWO_PI * bessel_i0e(self.nu))

    def _fourier(self):
        # trigonometric moments weighted by I_k(nu)/I_0(nu), or None when the
        # series is longer than a direct kernel sum
        if "_coef" not in self.__dict__:
            coef = None
            rho = bessel_ratios(self.nu)[1:]
            if rho.size * 4 < self.observations.size:
                k = np.arange(1, rho.size + 1)
                arg = np.outer(k, self.observations)
                coef = (rho * np.cos(arg).mean(axis=1), rho * np.sin(arg).mean(axis=1))
            object.__setattr__(self, "_coef", coef)
        return self._coef

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        flat = np.ascontiguousarray(theta.ravel())
        coef = self._fourier()
        if coef is None:
            vals = _kernels.vm_kernel_sum(flat, self.observations, self.nu) / (TWO_PI * bessel_i0e(self.nu))
        else:
            a, b = coef
            arg = np.outer(flat, np.arange(1, a.size + 1))
            vals = (1.0 + 2.0 * (np.cos(arg) @ a + np.sin(arg) @ b)) / TWO_PI
            vals = np.maximum(vals, 0.0)
        out = vals.reshape(theta.shape)
        return out if out.ndim else float(out)

    def cdf_unwrapped(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.ascontiguousarray(t.ravel())
        out = (_kernels.shifted_cdf_mean(flat, self.observations, *self._table) - self._offset).reshape(t.shape)
        return out if out.ndim else float(out)

    def cdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        outside = (theta < 0) | (theta > TWO_PI)
        theta = np.where(outside, np.mod(theta, TWO_PI), theta)
        out = np.clip(self.cdf_unwrapped(theta), 0.0, 1.0)
        out = np.where(theta == 0.0, 0.0, out)
        return out if np.ndim(out) else float(out)

    def quantile(self, u):
        """Numeric inverse of :meth:`cdf` (bisection on [0, 2 pi])."""
        u = np.asarray(u, dtype=float)
        if np.any(~(u >= 0) | ~(u <= 1)):
            raise DomainError("quantile level must lie in [0, 1]")
        flat = u.ravel()
        lo = np.zeros(flat.shape)
        hi = np.full(flat.shape, TWO_PI)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cdf_unwrapped(mid) < flat
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        out[flat == 0] = 0.0
        out[flat == 1] = np.nextafter(TWO_PI, 0.0)
        out = out.reshape(u.shape)
        return out if out.ndim else float(out)


def bessel_ratios(nu, tol=1e-17, max_order=4096):
    """``I_k(nu) / I_0(nu)`` for k = 0, 1, ... until the ratio drops below ``tol``."""
    k = np.arange(64)
    while True:
        r = ive(k, nu) / ive(0, nu)
        small = np.nonzero(r < tol)[0]
        if small.size or k.size >= max_order:
            return r[: small[0]] if small.size else r
        k = np.arange(2 * k.size)


class _LcvData:
    """Per-sample state for the leave-one-out likelihood.

    The full kernel sum at each observation comes from the Fourier expansion
    of the von Mises kernel (cost n x orders); removing the unit self term
    leaves the leave-one-out sum. Rows where that difference is small enough
    to lose digits, and short samples where the series is not cheaper, are
    summed pair by pair.
    """

    def __init__(self, theta):
        self.theta = np.ascontiguousarray(np.sort(theta))
        self.n = self.theta.size
        self._orders = 0
        self.cos_k = self.sin_k = np.empty((self.n, 0))

    def _moments(self, m):
        if m > self._orders:
            m = max(m, 2 * self._orders, 32)
            arg = np.outer(self.theta, np.arange(1, m + 1))
            self.cos_k = np.cos(arg)
            self.sin_k = np.sin(arg)
            self.c_k = self.cos_k.mean(axis=0)
            self.s_k = self.sin_k.mean(axis=0)
            self._orders = m

    def row_sums(self, nu):
        rho = bessel_ratios(nu)[1:]
        m = rho.size
        if m * _FOURIER_COST > self.n:
            return _kernels.loo_row_sums(self.theta, nu, _kernels.loo_window(nu))
        self._moments(m)
        series = self.cos_k[:, :m] @ (rho * self.c_k[:m]) + self.sin_k[:, :m] @ (rho * self.s_k[:m])
        s = self.n * bessel_i0e(nu) * (1.0 + 2.0 * series) - 1.0
        fix = np.nonzero(s < _FOURIER_FLOOR)[0]
        if fix.size:
            s[fix] = _kernels.loo_rows_exact(self.theta, nu, fix)
        return s

    def objective(self, nu):
        s = self.row_sums(nu)
        if np.any(s <= 0.0):
            return -math.inf
        n = self.n
        return float(np.log(s).sum()) - n * math.log((n - 1) * TWO_PI * bessel_i0e(nu))


def lcv_objective(sample, nu):
    """Leave-one-out log-likelihood of the circular kernel estimate at ``nu``."""
    theta = wrap_angle(np.asarray(sample, dtype=float).ravel())
    return _LcvData(theta).objective(float(nu))


def lcv_bandwidth(sample, grid=None):
    """Likelihood cross-validation bandwidth for the circular kernel estimator.

    The leave-one-out log-likelihood is scanned on a 60-point log grid over
    [0.05, 500]; the best grid cell's neighbourhood is then refined in
    ``log(nu)`` by bounded Brent search (golden section with parabolic steps).
    """
    theta = wrap_angle(np.asarray(sample, dtype=float).ravel())
    n = theta.size
    if n < 2:
        raise BandwidthSelectionError("bandwidth selection needs at least two observations")
    if np.all(theta == theta[0]):
        raise BandwidthSelectionError(f"degenerate sample: all angles identical; {_PERTURB_HINT}")
    grid = _LCV_GRID if grid is None else np.asarray(grid, dtype=float)
    data = _LcvData(theta)
    scores = np.array([data.objective(nu) for nu in grid])
    if not np.any(np.isfinite(scores)):
        raise BandwidthSelectionError(f"cross-validation failed at every bandwidth; {_PERTURB_HINT}")
    k = int(np.argmax(scores))
    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, grid.size - 1)])
    res = minimize_scalar(lambda x: -data.objective(math.exp(x)), bounds=(lo, hi),
                          method="bounded", options={"xatol": _REFINE_XTOL})
    if res.success and -res.fun > scores[k]:
        return float(math.exp(res.x))
    return float(grid[k])


def ckde_fit(sample, bandwidth=None):
    """Fit a circular kernel density; cross-validated ``nu`` unless given."""
    theta = np.asarray(sample, dtype=float).ravel()
    if theta.size < 2:
        raise FitError("kernel estimator needs at least two observations")
    if not np.all(np.isfinite(theta)):
        raise FitError("non-finite angle in sample")
    if bandwidth is None:
        bandwidth = lcv_bandwidth(theta)
    elif not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    return CircularKde(theta, float(bandwidth))


def ckde_density(model, theta):
    return model.density(theta)


def ckde_cdf(model, theta):
    return model.cdf(theta)
