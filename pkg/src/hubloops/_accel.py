"""Optional numba acceleration.

Set ``HUBLOOPS_NO_NUMBA=1`` before import to run every kernel as plain
Python. Both paths execute the same source, so results agree up to libm
rounding.
"""
import os

NUMBA_ENABLED = os.environ.get("HUBLOOPS_NO_NUMBA", "0") not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def njit(fn=None, **kw):
        kw.setdefault("cache", True)
        kw.setdefault("nogil", True)
        if fn is None:
            return lambda f: _njit(**kw)(f)
        return _njit(**kw)(fn)
else:
    def njit(fn=None, **kw):
        if fn is None:
            return lambda f: f
        return fn


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "python"
