"""Backend selection for the hot kernels.

CLUSTERTAIL_BACKEND=numba (default) compiles the simulation kernels with
numba's @njit; CLUSTERTAIL_BACKEND=python runs the identical source un-jitted
(slow, useful for debugging and for the backend benchmark). Both paths produce
bit-identical results because they share one implementation.
"""

import os
import warnings

_requested = os.environ.get("CLUSTERTAIL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "python"):
    raise RuntimeError(
        f"CLUSTERTAIL_BACKEND must be 'numba' or 'python', got {_requested!r}"
    )

USE_NUMBA = _requested == "numba"

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        warnings.warn("numba not importable; falling back to the python backend")
        USE_NUMBA = False

if USE_NUMBA:
    from numba import prange

    def jit(**kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(**kwargs)

    def set_threads(n):
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

    def get_threads():
        return numba.get_num_threads()

else:
    prange = range

    def jit(**kwargs):  # noqa: ARG001 - signature mirrors the numba path
        def deco(fn):
            return fn

        return deco

    def set_threads(n):  # noqa: ARG001 - single-threaded fallback
        pass

    def get_threads():
        return 1


BACKEND = "numba" if USE_NUMBA else "python"
