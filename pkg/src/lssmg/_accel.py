"""Numba switch.

Set ``LSSMG_DISABLE_NUMBA=1`` before import to run every kernel through its
pure-numpy path. Numba is also skipped automatically when it is not installed.
"""
import os

_flag = os.environ.get("LSSMG_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _flag not in ("1", "true", "yes", "on")


def njit(func):
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend():
    return "numba" if USE_NUMBA else "numpy"
