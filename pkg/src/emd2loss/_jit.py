"""Numba switch.

Set ``EMD2LOSS_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once at import time.
"""

import os

_DISABLED = os.environ.get("EMD2LOSS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

USE_NUMBA = numba is not None and not _DISABLED
HAVE_NUMBA = numba is not None


def njit(fn):
    """Compile ``fn`` with ``numba.njit(cache=True)`` if numba is importable.

    The plain Python function is returned otherwise so callers can still use it
    (slowly). Whether the compiled kernel is *selected* is decided separately by
    ``USE_NUMBA``.
    """
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
