"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``TRIFLOW_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("TRIFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled

        _impl = _compiled
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

element_geometry = _impl.element_geometry
scatter_stiffness = _impl.scatter_stiffness
lump = _impl.lump
