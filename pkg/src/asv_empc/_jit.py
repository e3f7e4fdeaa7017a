"""Optional numba acceleration.

Set ``ASV_EMPC_NUMBA=0`` to run every kernel as plain Python/numpy. The
flag is read once at import time.
"""

import os

USE_NUMBA = os.environ.get("ASV_EMPC_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def njit(fn):
    """Compile ``fn`` with numba in nopython mode when enabled, else return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
