"""Quadrature helpers: adaptive Simpson and composite Simpson weights."""
import numpy as np

__all__ = [
    "adaptive_simpson",
    "gauss_legendre_cells",
    "simpson_2d",
    "simpson_nodes",
    "simpson_weights",
]


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Integrate a scalar function on ``[a, b]`` by adaptive Simpson.

    Uses the classic Richardson-corrected recursion; ``tol`` is an absolute
    tolerance on the whole interval, split in half at each level.
    """
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _asr(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _asr(f, a, b, fa, fm, fb, whole, tol, depth):
    # explicit stack keeps deep refinements clear of the recursion limit
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, depth)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth - 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))
    return total


def simpson_nodes(a, b, n_intervals):
    """Nodes of a composite Simpson rule with ``n_intervals`` (even) panels."""
    if n_intervals < 2 or n_intervals % 2:
        raise ValueError(f"Simpson needs an even number of intervals, got {n_intervals}")
    return np.linspace(a, b, n_intervals + 1)


def simpson_weights(a, b, n_intervals):
    """Composite Simpson weights matching :func:`simpson_nodes`."""
    if n_intervals < 2 or n_intervals % 2:
        raise ValueError(f"Simpson needs an even number of intervals, got {n_intervals}")
    h = (b - a) / n_intervals
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def simpson_2d(values, w_rows, w_cols):
    """Tensor-product Simpson integral of a matrix of samples."""
    return float(w_rows @ values @ w_cols)


def gauss_legendre_cells(edges, order=10):
    """Nodes and weights of a Gauss-Legendre rule on every cell of ``edges``.

    Returns arrays of shape ``(n_cells, order)``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    lo = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    return lo + half * (x[None, :] + 1.0), half * w[None, :]
