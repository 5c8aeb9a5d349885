"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. Set GEODISPATCH_PURE=1 to force the fallback (useful for
benchmarking and for testing both paths).
"""

import os

if os.environ.get("GEODISPATCH_PURE"):
    from . import pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        from . import pure as _impl

        BACKEND = "pure"

haversine_km = _impl.haversine_km
sigmoid = _impl.sigmoid
bce_loss = _impl.bce_loss
bce_grad = _impl.bce_grad

__all__ = ["BACKEND", "haversine_km", "sigmoid", "bce_loss", "bce_grad"]
