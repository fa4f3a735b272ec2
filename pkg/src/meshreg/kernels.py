"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded. Set ``MESHREG_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("MESHREG_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

edt_squared = _impl.edt_squared
bilinear_sample = _impl.bilinear_sample

__all__ = ["BACKEND", "edt_squared", "bilinear_sample"]
