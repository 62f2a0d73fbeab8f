"""Selects between numba-compiled kernels and the pure-numpy fallback.

Set ``EGOCLUSTER_DISABLE_NUMBA=1`` before import to force the numpy path.
"""
from __future__ import annotations

import os

_FLAG = "EGOCLUSTER_DISABLE_NUMBA"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes"}


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
