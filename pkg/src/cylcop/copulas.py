"""Circular-linear copulas.

The first copula argument is the circular one: every circular-linear copula
density here satisfies ``c(0, v) == c(1, v)``.

Families
--------
Independence
    ``c == 1``.
JWLinkCopula
    Copula induced by a joining circular density ``g``:
    ``c(u, v) = 2 pi g(2 pi (u -/+ v))``.
QSCopula
    Quadratic section in the linear argument:
    ``c(u, v) = 1 + 2 pi alpha cos(2 pi u) (1 - 2 v)``, ``|alpha| <= 1/(2 pi)``.
ReflectedCopula
    Four-fold reflection of a base copula (used with :class:`FrankCopula`).
KernelCopula
    Gaussian kernel estimate on pseudo-observations, with circular mirror
    images (periodic in ``u``, reflected in ``v``).
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _kernels
from .circular import TWO_PI, VonMisesParams, vm_quantile
from .errors import BandwidthSelectionError, DomainError, FitError

__all__ = [
    "BandwidthMatrix",
    "FrankCopula",
    "Independence",
    "JWLinkCopula",
    "KernelCopula",
    "QSCopula",
    "ReflectedCopula",
    "copula_conditional",
    "copula_conditional_inverse",
    "copula_density",
    "invert_conditional",
    "kernel_copula_fit",
    "reflect_points",
    "reflected_frank",
    "select_copula_bandwidth",
]

_QS_DEGENERATE = 1e-9
_BISECT_WIDTH = 1e-10
_CLAMP_SLACK = 1e-12
# LSCV search grid
_LSCV_DIAG = np.geomspace(0.01, 0.5, 20)
_LSCV_OFF = np.linspace(-0.8, 0.8, 11)
# rotated difference histogram: nodes on [-2 sqrt2, 2 sqrt2], step ~0.004;
# (nodes - 1) divisible by 4 so the coarse level shares every fourth node
_HIST_NODES = 1417
_HIST_HALF_WIDTH = 2.0 * math.sqrt(2.0)
_COARSE_FACTOR = 4
# a level is used only when its step is at most this fraction of both kernel sds
_BIN_RESOLUTION = 1.0 / 3.0


def _unit(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0) | ~(x <= 1)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return x


def _out(x):
    return x if np.ndim(x) else float(x)


class Copula:
    """Shared behaviour; subclasses supply ``density`` and ``conditional``."""

    closed_form_inverse = False

    def density_grid(self, u, v):
        """Density on the tensor grid ``u x v`` (rows follow ``u``)."""
        uu, vv = np.meshgrid(np.asarray(u, float), np.asarray(v, float), indexing="ij")
        return np.asarray(self.density(uu, vv))

    def conditional_inverse(self, u, w):
        return invert_conditional(self, u, w)


def invert_conditional(copula, u, w, width=_BISECT_WIDTH):
    """Solve ``C_u(v) = w`` for ``v`` numerically.

    Bisection down to ``width``, then two Newton steps with the density as
    derivative, kept inside the final bracket.
    """
    u, w = np.broadcast_arrays(np.asarray(u, float), np.asarray(w, float))
    shape = u.shape
    u = u.ravel().copy()
    w = w.ravel().copy()
    lo = np.zeros_like(w)
    hi = np.ones_like(w)
    while np.max(hi - lo, initial=0.0) > width:
        mid = 0.5 * (lo + hi)
        below = np.asarray(copula.conditional(u, mid)) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    v = 0.5 * (lo + hi)
    for _ in range(2):
        f = np.asarray(copula.conditional(u, v)) - w
        slope = np.asarray(copula.density(u, v))
        ok = slope > 0
        v = np.where(ok, np.clip(v - f / np.where(ok, slope, 1.0), lo, hi), v)
    v[w <= 0] = 0.0
    v[w >= 1] = 1.0
    return _out(v.reshape(shape))


@dataclass(frozen=True)
class Independence(Copula):
    closed_form_inverse = True

    def density(self, u, v):
        return _out(np.ones(np.broadcast(np.asarray(u), np.asarray(v)).shape))

    def conditional(self, u, v):
        return _out(np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))[1].copy())

    def conditional_inverse(self, u, w):
        return _out(np.broadcast_arrays(np.asarray(u, float), np.asarray(w, float))[1].copy())


@dataclass(frozen=True)
class QSCopula(Copula):
    alpha: float
    closed_form_inverse = True

    def __post_init__(self):
        if not abs(self.alpha) <= 1.0 / TWO_PI * (1 + 1e-12):
            raise DomainError(f"QS copula needs |alpha| <= 1/(2 pi), got {self.alpha}")

    def _a(self, u):
        return TWO_PI * self.alpha * np.cos(TWO_PI * np.asarray(u, float))

    def density(self, u, v):
        return _out(1.0 + self._a(u) * (1.0 - 2.0 * np.asarray(v, float)))

    def conditional(self, u, v):
        v = np.asarray(v, float)
        return _out(v + self._a(u) * v * (1.0 - v))

    def conditional_inverse(self, u, w):
        a, w = np.broadcast_arrays(self._a(u), np.asarray(w, float))
        flat = np.abs(a) < _QS_DEGENERATE
        safe_a = np.where(flat, 1.0, a)
        root = ((safe_a + 1.0) - np.sqrt(np.maximum((safe_a + 1.0) ** 2 - 4.0 * safe_a * w, 0.0))) / (2.0 * safe_a)
        return _out(np.clip(np.where(flat, w, root), 0.0, 1.0))


@dataclass(frozen=True)
class FrankCopula(Copula):
    """Frank copula (not circular on its own; see :func:`reflected_frank`)."""

    alpha: float
    closed_form_inverse = True

    def __post_init__(self):
        if self.alpha == 0 or not math.isfinite(self.alpha):
            raise DomainError("Frank copula needs a finite alpha != 0; use Independence for alpha = 0")

    def density(self, u, v):
        a = self.alpha
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        one_m = -math.expm1(-a)
        denom = one_m - np.expm1(-a * u) * np.expm1(-a * v)
        return _out(a * one_m * np.exp(-a * (u + v)) / (denom * denom))

    def conditional(self, u, v):
        a = self.alpha
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        # denominator split into two same-signed terms: no cancellation, and
        # exact endpoints C(0|u) = 0, C(1|u) = 1
        num = np.exp(-a * u) * np.expm1(-a * v)
        return _out(num / (num + np.exp(-a * v) * np.expm1(-a * (1.0 - v))))

    def conditional_inverse(self, u, w):
        a = self.alpha
        u, w = np.broadcast_arrays(np.asarray(u, float), np.asarray(w, float))
        eu = np.exp(-a * u)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = -np.log1p(w * (-math.expm1(-a)) / (w * (eu - 1.0) - eu)) / a
        v = np.where(w <= 0, 0.0, np.where(w >= 1, 1.0, v))
        return _out(np.clip(v, 0.0, 1.0))


@dataclass(frozen=True)
class ReflectedCopula(Copula):
    """Average of ``base`` over the reflections u -> 1-u and v -> 1-v."""

    base: Copula

    def density(self, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        b = self.base.density
        return _out(0.25 * (np.asarray(b(u, v)) + b(1 - u, v) + b(u, 1 - v) + b(1 - u, 1 - v)))

    def conditional(self, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        h = self.base.conditional
        return _out(0.25 * (np.asarray(h(u, v)) + h(1 - u, v) + 2.0 - h(u, 1 - v) - h(1 - u, 1 - v)))

    def sample_mixture(self, n, rng):
        """Draw pairs by picking one of the four reflected components.

        Requires the base copula's closed-form conditional inverse; used as an
        independent route against numeric inversion.
        """
        u, w, pick = rng.random((3, n))
        v = np.asarray(self.base.conditional_inverse(u, w))
        comp = np.minimum((4.0 * pick).astype(int), 3)
        u = np.where(comp & 1, 1.0 - u, u)
        v = np.where(comp & 2, 1.0 - v, v)
        return u, v


def reflected_frank(alpha):
    return ReflectedCopula(FrankCopula(alpha))


@dataclass(frozen=True)
class JWLinkCopula(Copula):
    """Copula ``2 pi g(2 pi (u - v))`` (``sign='minus'``) or with ``u + v``.

    ``joining`` is any circular model with ``density`` and ``cdf_unwrapped``
    (a :class:`VonMisesParams` or a fitted circular kernel estimate).
    """

    joining: object
    sign: str = "minus"

    def __post_init__(self):
        if self.sign not in ("minus", "plus"):
            raise DomainError(f"sign must be 'minus' or 'plus', got {self.sign!r}")

    @property
    def closed_form_inverse(self):
        return isinstance(self.joining, VonMisesParams)

    def _arg(self, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        return TWO_PI * (u - v) if self.sign == "minus" else TWO_PI * (u + v)

    def density(self, u, v):
        t = np.mod(self._arg(u, v), TWO_PI)
        return _out(TWO_PI * np.asarray(self.joining.density(t)))

    def density_grid(self, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        diff = u[:, None] - v[None, :] if self.sign == "minus" else u[:, None] + v[None, :]
        t = np.mod(TWO_PI * diff, TWO_PI)
        return TWO_PI * np.asarray(self.joining.density(t.ravel())).reshape(t.shape)

    def conditional(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        big_g = self.joining.cdf_unwrapped
        a = TWO_PI * u
        if self.sign == "minus":
            out = np.asarray(big_g(a)) - big_g(a - TWO_PI * v)
        else:
            out = np.asarray(big_g(a + TWO_PI * v)) - big_g(a)
        return _out(np.clip(out, 0.0, 1.0))

    def conditional_inverse(self, u, w):
        if not self.closed_form_inverse:
            return invert_conditional(self, u, w)
        u, w = np.broadcast_arrays(np.asarray(u, float), np.asarray(w, float))
        g = self.joining
        shift = TWO_PI * u - g.mu if self.sign == "minus" else g.mu - TWO_PI * u
        v = np.asarray(vm_quantile(w, shift, g.kappa)) / TWO_PI
        v = np.where(w <= 0, 0.0, np.where(w >= 1, 1.0, v))
        return _out(v)


# --------------------------------------------------------------------------
# kernel copula estimator


@dataclass(frozen=True)
class BandwidthMatrix:
    """Restricted bandwidth ``B = [[diag, off], [off, diag]]``.

    ``B`` is a scale matrix: the kernel is ``|B|^-1 K(B^-1 x)`` with ``K`` the
    standard bivariate normal, so the kernel covariance is ``B @ B``.
    """

    diag: float
    off: float = 0.0

    def __post_init__(self):
        if not (self.diag > abs(self.off) and math.isfinite(self.diag)):
            raise DomainError(f"bandwidth matrix must be positive definite (diag > |off|), got {self}")
        object.__setattr__(self, "diag", float(self.diag))
        object.__setattr__(self, "off", float(self.off))

    @property
    def det(self):
        return self.diag * self.diag - self.off * self.off

    @property
    def covariance(self):
        """``(common variance, covariance)`` of the kernel, i.e. of ``B @ B``."""
        return _covariance(self.diag, self.off)


def _covariance(d, o):
    return d * d + o * o, 2.0 * d * o


def reflect_points(u, v):
    """The nine circular-mirror images of each point, as two (9, n) arrays.

    Rows are ordered bottom (v -> -v), middle (v), top (v -> 2 - v), each
    with the u shifts -1, 0, +1.
    """
    u = np.atleast_1d(np.asarray(u, float))
    v = np.atleast_1d(np.asarray(v, float))
    shifts = (-1.0, 0.0, 1.0)
    img_u = np.stack([u + s for _ in range(3) for s in shifts])
    img_v = np.stack([vv for vv in (-v, v, 2.0 - v) for _ in shifts])
    return img_u, img_v


def _pseudo_obs(pseudo_obs):
    pts = np.asarray(pseudo_obs, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("pseudo-observations must be an (n, 2) array")
    if np.any(~np.isfinite(pts)) or np.any(pts < -_CLAMP_SLACK) or np.any(pts > 1 + _CLAMP_SLACK):
        raise DomainError("pseudo-observations must lie in [0, 1]^2")
    return np.clip(pts, 0.0, 1.0)


class KernelCopula(Copula):
    """Gaussian kernel copula density with circular-mirror reflection.

    ``c(u, v) = (1/n) sum_i sum_l K_B((u, v) - image_l(u_i, v_i))``; the
    horizontal images make it exactly 1-periodic in ``u`` on [0, 1].
    """

    def __init__(self, pseudo_obs, bandwidth):
        pts = _pseudo_obs(pseudo_obs)
        self.pseudo_obs = pts
        self.bandwidth = bandwidth
        img_u, img_v = reflect_points(pts[:, 0], pts[:, 1])
        order = np.argsort(img_u.ravel(), kind="stable")
        self._img_u = np.ascontiguousarray(img_u.ravel()[order])
        self._img_v = np.ascontiguousarray(img_v.ravel()[order])

    @property
    def n(self):
        return self.pseudo_obs.shape[0]

    def density(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        var, cov = self.bandwidth.covariance
        vals = _kernels.copula_kde(np.ascontiguousarray(u.ravel()), np.ascontiguousarray(v.ravel()),
                                   self._img_u, self._img_v, var, cov)
        return _out((vals / self.n).reshape(u.shape))

    def _raw_conditional(self, u, v):
        var, cov = self.bandwidth.covariance
        return _kernels.copula_conditional(np.ascontiguousarray(u), np.ascontiguousarray(v),
                                           self._img_u, self._img_v, var, cov) / self.n

    def conditional(self, u, v):
        """Conditional distribution, normalised so that ``C_u(1) == 1``."""
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        flat_u = u.ravel()
        num = self._raw_conditional(flat_u, v.ravel())
        den = self._raw_conditional(flat_u, np.ones_like(flat_u))
        return _out(np.clip(num / den, 0.0, 1.0).reshape(u.shape))

    def conditional_inverse(self, u, w):
        # the normalised conditional has derivative density / C_u(1)
        return invert_conditional(_NormalisedKernel(self), u, w)


class _NormalisedKernel:
    def __init__(self, kc):
        self.kc = kc

    def conditional(self, u, v):
        return self.kc.conditional(u, v)

    def density(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        den = self.kc._raw_conditional(u.ravel(), np.ones(u.size))
        return np.asarray(self.kc.density(u, v)).ravel() / den


def _gauss_sum(du, dv, weights, d, o):
    return _kernels.gauss_weighted_sum(du, dv, weights, d, o)


def _coarsen(hist):
    # linear re-binning of every axis onto every second node
    for axis in (0, 1):
        h = np.moveaxis(hist, axis, 0)
        out = h[::2].copy()
        out[:-1] += 0.5 * h[1::2]
        out[1:] += 0.5 * h[1::2]
        hist = np.moveaxis(out, 0, axis)
    return hist


class _BinnedLevel:
    def __init__(self, hist):
        self.hist = np.ascontiguousarray(hist)
        self.nodes = np.linspace(-_HIST_HALF_WIDTH, _HIST_HALF_WIDTH, hist.shape[0])
        self.step = self.nodes[1] - self.nodes[0]

    def _window(self, sd):
        reach = math.sqrt(_kernels.Q_CUT) * sd
        lo = int(np.searchsorted(self.nodes, -reach))
        hi = int(np.searchsorted(self.nodes, reach, side="right"))
        x = self.nodes[lo:hi]
        return lo, hi, np.exp(-0.5 * (x / sd) ** 2) / (math.sqrt(TWO_PI) * sd)

    def gauss_sum(self, sd_s, sd_t):
        r0, r1, ks = self._window(sd_s)
        c0, c1, kt = self._window(sd_t)
        return float(ks @ self.hist[r0:r1, c0:c1] @ kt)


class _LscvData:
    """Pair differences binned once and reused across candidate bandwidths.

    Every restricted bandwidth matrix has eigenvectors (1, 1)/sqrt2 and
    (1, -1)/sqrt2, so in that rotated frame each candidate kernel is a product
    of two univariate normals with sds ``diag + off`` and ``diag - off`` and a
    binned kernel sum is a bilinear form in the histogram.
    """

    def __init__(self, pts):
        n = pts.shape[0]
        u = np.ascontiguousarray(pts[:, 0])
        v = np.ascontiguousarray(pts[:, 1])
        img_u, img_v = reflect_points(u, v)
        hist = _kernels.rotated_difference_histogram(u, v, np.ascontiguousarray(img_u),
                                                     np.ascontiguousarray(img_v), _HIST_NODES, _HIST_HALF_WIDTH)
        self.levels = [_BinnedLevel(hist)]
        coarse = hist
        for _ in range(int(math.log2(_COARSE_FACTOR))):
            coarse = _coarsen(coarse)
        self.levels.append(_BinnedLevel(coarse))
        # a point against its own eight images, kept exact
        own = np.ones(9, dtype=bool)
        own[4] = False
        self.self_du = np.ascontiguousarray((u[None, :] - img_u[own]).ravel())
        self.self_dv = np.ascontiguousarray((v[None, :] - img_v[own]).ravel())
        self.self_w = np.ones(self.self_du.size)
        self.n = n

    def _pairs(self, sd_s, sd_t):
        level = self.levels[-1]
        if level.step > _BIN_RESOLUTION * min(sd_s, sd_t):
            level = self.levels[0]
        return level.gauss_sum(sd_s, sd_t)

    def score(self, d, o):
        n = self.n
        var, cov = _covariance(d, o)
        sd_s, sd_t = d + o, d - o
        root2 = math.sqrt(2.0)
        k2_pairs = self._pairs(root2 * sd_s, root2 * sd_t)
        k2_self = _gauss_sum(self.self_du, self.self_dv, self.self_w, 2 * var, 2 * cov)
        k2_zero = 1.0 / (TWO_PI * 2.0 * (d * d - o * o))
        k1_pairs = self._pairs(sd_s, sd_t)
        integral_sq = (k2_pairs + k2_self + n * k2_zero) / (n * n)
        loo = k1_pairs / (n * (n - 1))
        return integral_sq - 2.0 * loo


def _normal_reference(pts):
    # bivariate normal-reference covariance n^(-1/3) S, restricted to a common
    # variance, then mapped to the scale matrix B with B @ B equal to it
    n = pts.shape[0]
    s = np.cov(pts.T) * n ** (-1.0 / 3.0)
    var = 0.5 * (s[0, 0] + s[1, 1])
    rho = float(np.clip(s[0, 1] / var, -0.8, 0.8))
    # eigenvalues var (1 +/- rho) of the target; B has their square roots
    hi = math.sqrt(var * (1 + rho))
    lo = math.sqrt(var * (1 - rho))
    diag = 0.5 * (hi + lo)
    off = float(np.clip(0.5 * (hi - lo), -0.8 * diag, 0.8 * diag))
    return diag, off


def lscv_score(pseudo_obs, bandwidth):
    """Least-squares cross-validation criterion of the kernel copula."""
    data = _LscvData(_pseudo_obs(pseudo_obs))
    return data.score(bandwidth.diag, bandwidth.off)


def select_copula_bandwidth(pseudo_obs):
    """LSCV choice of the restricted bandwidth matrix.

    Candidates: the bivariate normal-reference matrix plus a 20 x 11 grid,
    diagonal log-spaced in [0.01, 0.5] and off-diagonal in
    [-0.8, 0.8] x diagonal.
    """
    pts = _pseudo_obs(pseudo_obs)
    n = pts.shape[0]
    if n < 10:
        raise BandwidthSelectionError("copula bandwidth selection needs at least 10 points")
    if np.ptp(pts[:, 0]) == 0 or np.ptp(pts[:, 1]) == 0:
        raise BandwidthSelectionError("degenerate pseudo-observations: a coordinate is constant")
    data = _LscvData(pts)
    best = _normal_reference(pts)
    best_score = data.score(*best) if best[0] > 0 else math.inf
    for d in _LSCV_DIAG:
        for frac in _LSCV_OFF:
            s = data.score(d, frac * d)
            if s < best_score:
                best, best_score = (float(d), float(frac * d)), s
    if not math.isfinite(best_score):
        raise BandwidthSelectionError("LSCV criterion is not finite on the search grid")
    return BandwidthMatrix(*best)


def kernel_copula_fit(pseudo_obs, bandwidth=None):
    pts = _pseudo_obs(pseudo_obs)
    if pts.shape[0] < 10:
        raise FitError("kernel copula needs at least 10 pseudo-observations")
    if bandwidth is None:
        bandwidth = select_copula_bandwidth(pts)
    elif not isinstance(bandwidth, BandwidthMatrix):
        bandwidth = BandwidthMatrix(*bandwidth)
    return KernelCopula(pts, bandwidth)


# --------------------------------------------------------------------------
# functional front-end with argument checks


def copula_density(model, u, v):
    return model.density(_unit(u, "u"), _unit(v, "v"))


def copula_conditional(model, u, v):
    return model.conditional(_unit(u, "u"), _unit(v, "v"))


def copula_conditional_inverse(model, u, w):
    u, w = np.broadcast_arrays(_unit(u, "u"), _unit(w, "w"))
    v = np.where(w <= 0.0, 0.0, np.where(w >= 1.0, 1.0, model.conditional_inverse(u, w)))
    return _out(v)
