"""Optional numba acceleration.

Hot kernels are written once as plain Python loops over numpy arrays and
wrapped with :func:`maybe_njit`.  When numba is importable and the
``STRINGBO_DISABLE_NUMBA`` environment variable is unset (or ``0``), the
kernels are JIT compiled; otherwise callers dispatch to the vectorised
numpy fallbacks.  Both paths must produce identical results.
"""

import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def _flag_disabled():
    return os.environ.get("STRINGBO_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = NUMBA_AVAILABLE and not _flag_disabled()


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit(cache=False)`` when available.

    The undecorated function stays reachable as ``func.py_func`` either way,
    which the benchmark uses to time the interpreted loop.
    """
    if not NUMBA_AVAILABLE:
        func.py_func = func
        return func
    return numba.njit(cache=False)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
