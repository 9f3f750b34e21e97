"""Backend selection for the hot kernels.

Set ``COVLAB_DISABLE_NUMBA=1`` (or any of ``true``/``yes``/``on``) before
importing :mod:`covlab` to force the pure-numpy path. The numba path is also
skipped when numba cannot be imported.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}

NUMBA_DISABLED = os.environ.get("COVLAB_DISABLE_NUMBA", "").strip().lower() in _TRUTHY

try:
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False
    _njit = None

USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise the identity decorator.

    Decoration happens even when the numpy backend is active so both paths
    stay importable for tests and benchmarks.
    """
    if HAS_NUMBA:
        return _njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
