"""Numba switch.

Set ``VOXFRAC_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
path. The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("VOXFRAC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay importable
    numba = None

HAVE_NUMBA = numba is not None and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity decorator otherwise."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
