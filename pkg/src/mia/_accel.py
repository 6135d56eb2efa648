"""Backend switch for the hot kernels.

Numba is used when importable unless ``MIA_DISABLE_NUMBA`` is set to a truthy
value; the pure-numpy path is then used everywhere. Both paths are kept
importable so they can be cross-checked and benchmarked.
"""
import os

_FLAG = os.environ.get("MIA_DISABLE_NUMBA", "").strip().lower()

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
