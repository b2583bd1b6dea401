"""Numba switch for the hot kernels.

Set ``CYLCOP_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. for
debugging or on platforms without a working numba install.
"""
import os
import warnings

_DISABLED = os.environ.get("CYLCOP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by CYLCOP_DISABLE_NUMBA")
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError as exc:  # pragma: no cover - depends on environment
    NUMBA_ENABLED = False
    if not _DISABLED:
        warnings.warn(f"numba unavailable ({exc}); using numpy kernels")

    def _njit(*args, **kwargs):
        def decorator(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return decorator


def njit(func):
    """Compile ``func`` with numba (cached, no fastmath) when available."""
    if not NUMBA_ENABLED:
        return func
    return _njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
