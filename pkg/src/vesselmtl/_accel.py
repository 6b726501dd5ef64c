"""Numba switch for the hot kernels.

Set ``VESSELMTL_NO_NUMBA=1`` in the environment to run every kernel through its
pure-numpy path. The choice is made once at import time.
"""
import os

_disabled = os.environ.get("VESSELMTL_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _disabled:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when numba is active, otherwise the identity decorator."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
