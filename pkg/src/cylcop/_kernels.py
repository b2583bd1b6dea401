"""Hot inner loops.

Every kernel exists twice: a loop version compiled by numba (``*_nb``) and a
vectorised numpy version (``*_np``).  The public name is bound to the numba
version unless ``CYLCOP_DISABLE_NUMBA`` is set.  Both versions must agree to
rounding error; ``tests/test_kernels.py`` checks that.
"""
import math

import numpy as np
from scipy.special import ndtr

from ._accel import NUMBA_ENABLED, njit

TWO_PI = 2.0 * math.pi
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
# exp(-Q_CUT / 2) ~ 4e-18: kernel terms beyond this are dropped
Q_CUT = 80.0
_CHUNK = 2048
# windowed leave-one-out sums: skipped terms are below exp(-_LOO_CUT)
_LOO_CUT = 40.0
_ROW_FLOOR = 1e-3


# --------------------------------------------------------------------------
# periodic Hermite lookup of a cumulative table G on [0, 2pi], G(t + 2pi) = G(t) + 1


def hermite_periodic_np(t, table, slopes, step):
    t = np.asarray(t, dtype=float)
    n_cells = table.shape[0] - 1
    wraps = np.floor(t / TWO_PI)
    r = t - wraps * TWO_PI
    k = np.minimum((r / step).astype(np.int64), n_cells - 1)
    s = (r - k * step) / step
    s2 = s * s
    s3 = s2 * s
    val = ((2.0 * s3 - 3.0 * s2 + 1.0) * table[k]
           + (s3 - 2.0 * s2 + s) * step * slopes[k]
           + (3.0 * s2 - 2.0 * s3) * table[k + 1]
           + (s3 - s2) * step * slopes[k + 1])
    return val + wraps


@njit
def _hermite_one(t, table, slopes, step):
    n_cells = table.shape[0] - 1
    wraps = math.floor(t / TWO_PI)
    r = t - wraps * TWO_PI
    k = int(r / step)
    if k > n_cells - 1:
        k = n_cells - 1
    s = (r - k * step) / step
    s2 = s * s
    s3 = s2 * s
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * table[k]
            + (s3 - 2.0 * s2 + s) * step * slopes[k]
            + (3.0 * s2 - 2.0 * s3) * table[k + 1]
            + (s3 - s2) * step * slopes[k + 1]) + wraps


@njit
def hermite_periodic_nb(t, table, slopes, step):
    out = np.empty(t.shape[0])
    for m in range(t.shape[0]):
        out[m] = _hermite_one(t[m], table, slopes, step)
    return out


# --------------------------------------------------------------------------
# circular kernel estimator (von Mises kernel)


def shifted_cdf_mean_np(t, centers, table, slopes, step):
    """mean_i G(t_m - c_i) for every evaluation point t_m."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape[0])
    for lo in range(0, t.shape[0], _CHUNK):
        block = t[lo:lo + _CHUNK, None] - centers[None, :]
        vals = hermite_periodic_np(block.ravel(), table, slopes, step)
        out[lo:lo + _CHUNK] = vals.reshape(block.shape).mean(axis=1)
    return out


@njit
def shifted_cdf_mean_nb(t, centers, table, slopes, step):
    n = centers.shape[0]
    out = np.empty(t.shape[0])
    for m in range(t.shape[0]):
        acc = 0.0
        for i in range(n):
            acc += _hermite_one(t[m] - centers[i], table, slopes, step)
        out[m] = acc / n
    return out


def vm_kernel_sum_np(theta, centers, nu):
    """mean_i exp(nu * (cos(theta_m - c_i) - 1))."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape[0])
    for lo in range(0, theta.shape[0], _CHUNK):
        diff = theta[lo:lo + _CHUNK, None] - centers[None, :]
        out[lo:lo + _CHUNK] = np.exp(nu * (np.cos(diff) - 1.0)).mean(axis=1)
    return out


@njit
def vm_kernel_sum_nb(theta, centers, nu):
    n = centers.shape[0]
    out = np.empty(theta.shape[0])
    for m in range(theta.shape[0]):
        acc = 0.0
        for i in range(n):
            acc += math.exp(nu * (math.cos(theta[m] - centers[i]) - 1.0))
        out[m] = acc / n
    return out


def loo_rows_exact_np(theta, nu, rows):
    """Exact leave-one-out kernel sums for the selected ``rows``."""
    e = np.exp(nu * (np.cos(theta[rows, None] - theta[None, :]) - 1.0))
    e[np.arange(rows.size), rows] = 0.0
    return e.sum(axis=1)


@njit
def loo_rows_exact_nb(theta, nu, rows):
    out = np.zeros(rows.shape[0])
    for r in range(rows.shape[0]):
        i = rows[r]
        acc = 0.0
        for j in range(theta.shape[0]):
            if j != i:
                acc += math.exp(nu * (math.cos(theta[i] - theta[j]) - 1.0))
        out[r] = acc
    return out


def loo_window(nu):
    """Angular half-width beyond which exp(nu (cos d - 1)) < exp(-_LOO_CUT)."""
    if nu * 2.0 <= _LOO_CUT:
        return math.pi
    return math.acos(1.0 - _LOO_CUT / nu)


def loo_row_sums_np(theta, nu, window):
    """Row sums sum_{j != i} exp(nu * (cos(theta_i - theta_j) - 1)).

    ``window`` is ignored here (every pair is summed); see the numba version.
    """
    n = theta.shape[0]
    out = np.empty(n)
    for lo in range(0, n, _CHUNK):
        e = np.exp(nu * (np.cos(theta[lo:lo + _CHUNK, None] - theta[None, :]) - 1.0))
        rows = np.arange(e.shape[0])
        e[rows, lo + rows] = 0.0
        out[lo:lo + _CHUNK] = e.sum(axis=1)
    return out


@njit
def loo_row_sums_nb(theta, nu, window):
    # theta sorted ascending in [0, 2 pi); pairs further apart than ``window``
    # are skipped, rows left below _ROW_FLOOR are recomputed in full
    n = theta.shape[0]
    s = np.zeros(n)
    if window >= math.pi:
        for i in range(n):
            for j in range(i + 1, n):
                e = math.exp(nu * (math.cos(theta[i] - theta[j]) - 1.0))
                s[i] += e
                s[j] += e
        return s
    for i in range(n):
        for step in range(1, n):
            j = i + step
            if j >= n:
                j -= n
                d = theta[j] + TWO_PI - theta[i]
            else:
                d = theta[j] - theta[i]
            if d > window:
                break
            e = math.exp(nu * (math.cos(d) - 1.0))
            s[i] += e
            s[j] += e
    for i in range(n):
        if s[i] < _ROW_FLOOR:
            acc = 0.0
            for j in range(n):
                if j != i:
                    acc += math.exp(nu * (math.cos(theta[i] - theta[j]) - 1.0))
            s[i] = acc
    return s


# --------------------------------------------------------------------------
# Sheather-Jones: binned pairwise distance counts


def pair_distance_counts_np(x, n_bins):
    x = np.asarray(x, dtype=float)
    width = (x.max() - x.min()) * 1.01 / n_bins
    idx = np.floor((x - x.min()) / width).astype(np.int64)
    counts = np.zeros(n_bins)
    for lo in range(0, x.shape[0], _CHUNK):
        block = idx[lo:lo + _CHUNK]
        d = np.abs(block[:, None] - idx[None, :])
        # keep pairs j < i only
        mask = np.arange(lo, lo + block.shape[0])[:, None] > np.arange(x.shape[0])[None, :]
        counts += np.bincount(d[mask], minlength=n_bins)[:n_bins]
    return width, counts


@njit
def pair_distance_counts_nb(x, n_bins):
    xmin = x.min()
    width = (x.max() - xmin) * 1.01 / n_bins
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx[i] = int(math.floor((x[i] - xmin) / width))
    counts = np.zeros(n_bins)
    for i in range(1, n):
        for j in range(i):
            counts[abs(idx[i] - idx[j])] += 1.0
    return width, counts


# --------------------------------------------------------------------------
# bivariate Gaussian copula kernel with bandwidth matrix [[d, o], [o, d]]


def copula_kde_np(u, v, img_u, img_v, d, o):
    """sum_k K_B((u, v) - image_k) over all image points (caller divides by n)."""
    det = d * d - o * o
    norm = 1.0 / (TWO_PI * math.sqrt(det))
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.empty(u.shape[0])
    for lo in range(0, u.shape[0], 256):
        du = u[lo:lo + 256, None] - img_u[None, :]
        dv = v[lo:lo + 256, None] - img_v[None, :]
        q = (d * (du * du + dv * dv) - 2.0 * o * du * dv) / det
        out[lo:lo + 256] = np.where(q < Q_CUT, np.exp(-0.5 * q), 0.0).sum(axis=1)
    return out * norm


@njit
def copula_kde_nb(u, v, img_u, img_v, d, o):
    # img_u must be sorted ascending
    det = d * d - o * o
    norm = 1.0 / (TWO_PI * math.sqrt(det))
    reach = math.sqrt(Q_CUT * (d + abs(o)))
    out = np.empty(u.shape[0])
    for m in range(u.shape[0]):
        start = np.searchsorted(img_u, u[m] - reach)
        acc = 0.0
        for k in range(start, img_u.shape[0]):
            du = u[m] - img_u[k]
            if du < -reach:
                break
            dv = v[m] - img_v[k]
            q = (d * (du * du + dv * dv) - 2.0 * o * du * dv) / det
            if q < Q_CUT:
                acc += math.exp(-0.5 * q)
        out[m] = acc * norm
    return out


def copula_conditional_np(u, v, img_u, img_v, d, o):
    """sum over images of int_0^v K_B((u, t) - image) dt."""
    slope = o / d
    s = math.sqrt(d - o * o / d)
    norm = 1.0 / math.sqrt(TWO_PI * d)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.empty(u.shape[0])
    for lo in range(0, u.shape[0], 256):
        du = u[lo:lo + 256, None] - img_u[None, :]
        mean = img_v[None, :] + slope * du
        marg = norm * np.exp(-0.5 * du * du / d)
        mass = ndtr((v[lo:lo + 256, None] - mean) / s) - ndtr(-mean / s)
        out[lo:lo + 256] = (marg * mass).sum(axis=1)
    return out


@njit
def copula_conditional_nb(u, v, img_u, img_v, d, o):
    slope = o / d
    s = math.sqrt(d - o * o / d)
    norm = 1.0 / math.sqrt(TWO_PI * d)
    reach = math.sqrt(Q_CUT * d)
    out = np.empty(u.shape[0])
    for m in range(u.shape[0]):
        start = np.searchsorted(img_u, u[m] - reach)
        acc = 0.0
        for k in range(start, img_u.shape[0]):
            du = u[m] - img_u[k]
            if du < -reach:
                break
            mean = img_v[k] + slope * du
            marg = norm * math.exp(-0.5 * du * du / d)
            hi = 0.5 * math.erfc(-(v[m] - mean) / s * _INV_SQRT2)
            lo = 0.5 * math.erfc(mean / s * _INV_SQRT2)
            acc += marg * (hi - lo)
        out[m] = acc
    return out


# --------------------------------------------------------------------------
# LSCV for the copula bandwidth: pair differences binned in the rotated
# frame s = (du + dv)/sqrt2, t = (du - dv)/sqrt2, the common eigenbasis of
# every restricted bandwidth matrix


def rotated_difference_histogram_np(u, v, img_u, img_v, n_nodes, half_width):
    """Linear-binned rotated differences a_i - image_j over all i != j.

    ``img_u``/``img_v`` are (9, n) arrays of image coordinates, image l of
    point j at ``[l, j]``. Returns an (n_nodes, n_nodes) array indexed [s, t].
    """
    n = u.shape[0]
    step = 2.0 * half_width / (n_nodes - 1)
    hist = np.zeros(n_nodes * n_nodes)
    for i in range(n):
        du = (u[i] - img_u).ravel()
        dv = (v[i] - img_v).ravel()
        keep = np.ones(du.shape[0], dtype=bool)
        keep[i::n] = False  # all images of point i itself
        du = du[keep]
        dv = dv[keep]
        gx = ((du + dv) * _INV_SQRT2 + half_width) / step
        gy = ((du - dv) * _INV_SQRT2 + half_width) / step
        ix = np.clip(np.floor(gx).astype(np.int64), 0, n_nodes - 2)
        iy = np.clip(np.floor(gy).astype(np.int64), 0, n_nodes - 2)
        fx = gx - ix
        fy = gy - iy
        base = ix * n_nodes + iy
        hist += np.bincount(base, (1 - fx) * (1 - fy), minlength=n_nodes * n_nodes)
        hist += np.bincount(base + n_nodes, fx * (1 - fy), minlength=n_nodes * n_nodes)
        hist += np.bincount(base + 1, (1 - fx) * fy, minlength=n_nodes * n_nodes)
        hist += np.bincount(base + n_nodes + 1, fx * fy, minlength=n_nodes * n_nodes)
    return hist.reshape(n_nodes, n_nodes)


@njit
def rotated_difference_histogram_nb(u, v, img_u, img_v, n_nodes, half_width):
    n = u.shape[0]
    n_img = img_u.shape[0]
    step = 2.0 * half_width / (n_nodes - 1)
    hist = np.zeros((n_nodes, n_nodes))
    for i in range(n):
        for l in range(n_img):
            for j in range(n):
                if j == i:
                    continue
                du = u[i] - img_u[l, j]
                dv = v[i] - img_v[l, j]
                gx = ((du + dv) * _INV_SQRT2 + half_width) / step
                gy = ((du - dv) * _INV_SQRT2 + half_width) / step
                ix = min(max(int(math.floor(gx)), 0), n_nodes - 2)
                iy = min(max(int(math.floor(gy)), 0), n_nodes - 2)
                fx = gx - ix
                fy = gy - iy
                hist[ix, iy] += (1.0 - fx) * (1.0 - fy)
                hist[ix + 1, iy] += fx * (1.0 - fy)
                hist[ix, iy + 1] += (1.0 - fx) * fy
                hist[ix + 1, iy + 1] += fx * fy
    return hist


def gauss_weighted_sum_np(du, dv, weights, d, o):
    """sum_k w_k K_B(du_k, dv_k) for the bivariate normal kernel."""
    det = d * d - o * o
    q = (d * (du * du + dv * dv) - 2.0 * o * du * dv) / det
    vals = np.where(q < Q_CUT, np.exp(-0.5 * q), 0.0)
    return float(weights @ vals) / (TWO_PI * math.sqrt(det))


@njit
def gauss_weighted_sum_nb(du, dv, weights, d, o):
    det = d * d - o * o
    acc = 0.0
    for k in range(du.shape[0]):
        q = (d * (du[k] * du[k] + dv[k] * dv[k]) - 2.0 * o * du[k] * dv[k]) / det
        if q < Q_CUT:
            acc += weights[k] * math.exp(-0.5 * q)
    return acc / (TWO_PI * math.sqrt(det))


if NUMBA_ENABLED:
    hermite_periodic = hermite_periodic_nb
    shifted_cdf_mean = shifted_cdf_mean_nb
    vm_kernel_sum = vm_kernel_sum_nb
    loo_row_sums = loo_row_sums_nb
    loo_rows_exact = loo_rows_exact_nb
    pair_distance_counts = pair_distance_counts_nb
    copula_kde = copula_kde_nb
    copula_conditional = copula_conditional_nb
    rotated_difference_histogram = rotated_difference_histogram_nb
    gauss_weighted_sum = gauss_weighted_sum_nb
else:
    hermite_periodic = hermite_periodic_np
    shifted_cdf_mean = shifted_cdf_mean_np
    vm_kernel_sum = vm_kernel_sum_np
    loo_row_sums = loo_row_sums_np
    loo_rows_exact = loo_rows_exact_np
    pair_distance_counts = pair_distance_counts_np
    copula_kde = copula_kde_np
    copula_conditional = copula_conditional_np
    rotated_difference_histogram = rotated_difference_histogram_np
    gauss_weighted_sum = gauss_weighted_sum_np
