"""JIT switch.

Set ``SPCL_NO_NUMBA=1`` to force the pure-numpy kernels (useful for
debugging and for checking the two paths against each other).
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("SPCL_NO_NUMBA", "0").lower() in ("", "0", "false", "no")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    The jitted variants are always built (so tests can compare them with the
    numpy variants); ``USE_NUMBA`` only decides which one the library calls.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
