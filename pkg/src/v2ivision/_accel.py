"""Numba switch.

Kernels in :mod:`v2ivision.kernels` are written twice: a numba ``@njit``
version and a pure-numpy version. Which one is exported is decided once at
import time. Set ``V2IVISION_DISABLE_NUMBA=1`` to force the numpy path.
"""
import os

DISABLE_ENV = "V2IVISION_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and os.environ.get(DISABLE_ENV, "").strip().lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    kwargs.setdefault("cache", True)
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int) -> None:
    """Cap numba and BLAS thread pools. No-op for values < 1."""
    if n < 1:
        return
    if HAS_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(n)


def keep_heap() -> None:
    """Stop glibc from returning large freed blocks to the OS.

    Training allocates and frees the same tens-of-megabyte buffers every
    step; with the default mmap threshold each one page-faults afresh.
    Linux/glibc only, silently skipped elsewhere.
    """
    global _HEAP_TUNED
    if _HEAP_TUNED:
        return
    _HEAP_TUNED = True
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
    except OSError:
        return
    libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    libc.mallopt(-1, (1 << 31) - 1)  # M_TRIM_THRESHOLD


_HEAP_TUNED = False
