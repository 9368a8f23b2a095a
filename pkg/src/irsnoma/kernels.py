"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``IRSNOMA_PURE_PYTHON=1`` to force the numpy versions.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("IRSNOMA_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py

balanced_sinr_batch = _impl.balanced_sinr_batch
siso_grid_search = _impl.siso_grid_search
suffix_min = _kernels_py.suffix_min

__all__ = ["BACKEND", "balanced_sinr_batch", "siso_grid_search", "suffix_min"]
