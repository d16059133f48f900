"""Backend selection for the hot numeric kernels.

Set ``DUALAIF_BACKEND=numpy`` to force the pure-numpy paths; the default is
numba when it imports cleanly.
"""
import os

_requested = os.environ.get("DUALAIF_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"DUALAIF_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if _njit is None:
        return fn
    return _njit(cache=True)(fn)
