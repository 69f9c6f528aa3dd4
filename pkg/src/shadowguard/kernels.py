"""Backend selection for the per-pixel kernels.

The compiled extension is used when it imports; otherwise the numpy versions
are used. Set ``SHADOWGUARD_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("SHADOWGUARD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

correlate_replicate = _impl.correlate_replicate
threshold_margin = _impl.threshold_margin
nonmax_suppress = _impl.nonmax_suppress
hysteresis = _impl.hysteresis
rasterize_evenodd = _impl.rasterize_evenodd

__all__ = [
    "BACKEND",
    "correlate_replicate",
    "threshold_margin",
    "nonmax_suppress",
    "hysteresis",
    "rasterize_evenodd",
]
