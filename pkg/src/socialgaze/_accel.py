"""Numba switch.

Hot kernels come in two flavours: an ``@njit`` loop version and a plain
numpy version.  Set ``SOCIALGAZE_DISABLE_NUMBA=1`` to force the numpy path
(useful for debugging or where numba cannot be installed).
"""
import os
import warnings

_FLAG = os.environ.get("SOCIALGAZE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    HAVE_NUMBA = False

    def njit(*args, **kw):
        if len(args) == 1 and callable(args[0]) and not kw:
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")

if not HAVE_NUMBA and _FLAG in ("", "0", "false", "no", "off"):  # pragma: no cover
    warnings.warn("numba is not installed - falling back to numpy kernels")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


__all__ = ["njit", "USE_NUMBA", "HAVE_NUMBA", "backend"]
