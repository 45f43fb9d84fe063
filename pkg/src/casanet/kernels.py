"""Loop kernels, compiled when available.

The Cython build (``casanet._kernels``) is used unless it failed to build
or ``CASANET_PURE_PYTHON=1`` is set, in which case the pure-Python versions
in ``casanet._kernels_py`` are used. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("CASANET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

softmax_rows = _impl.softmax_rows
softmax_rows_backward = _impl.softmax_rows_backward
median_filter = _impl.median_filter
label_runs = _impl.label_runs
intersection_length = _impl.intersection_length
sweep_components = _impl.sweep_components
assign_min_cost = _impl.assign_min_cost

__all__ = [
    "BACKEND",
    "assign_min_cost",
    "compiled_backend",
    "intersection_length",
    "label_runs",
    "median_filter",
    "python_backend",
    "softmax_rows",
    "softmax_rows_backward",
    "sweep_components",
]
