"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``SFWMARK_PURE=1`` to force
the numpy path (the benchmark and the backend-equivalence tests do this).
"""
import os

from . import _fallback

BACKEND = "numpy"
if os.environ.get("SFWMARK_PURE") != "1":
    try:
        from . import _native as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback

l1_rows = _impl.l1_rows
l1_argmin = _impl.l1_argmin

__all__ = ["BACKEND", "l1_rows", "l1_argmin"]
