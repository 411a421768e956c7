"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementations are used. Set ``DYNNAV_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("DYNNAV_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
dbscan_labels = _impl.dbscan_labels
gaussian_smooth = _impl.gaussian_smooth
rollout_cost_grad = _impl.rollout_cost_grad


def available_backends():
    """Map of backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        return out
    out["cython"] = _kernels
    return out
