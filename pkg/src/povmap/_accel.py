"""Backend selection for the hot kernels.

Numba is used when importable unless ``POVMAP_DISABLE_NUMBA`` is set to a
truthy value, in which case every kernel runs its pure-numpy twin.
"""
import os

_FALSEY = {"", "0", "false", "no", "off"}


def _numba_requested():
    return os.environ.get("POVMAP_DISABLE_NUMBA", "").strip().lower() in _FALSEY


try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def default_backend():
    """Return ``"numba"`` or ``"numpy"`` based on the environment."""
    return "numba" if HAVE_NUMBA and _numba_requested() else "numpy"


def resolve(backend=None):
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def set_threads(n):
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
