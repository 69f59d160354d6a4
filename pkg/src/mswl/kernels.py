"""Kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set MSWL_PURE_PYTHON=1 to force the fallback (used by the parity tests and
the benchmark).
"""

import os

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

if _kernels_cy is not None and not os.environ.get("MSWL_PURE_PYTHON"):
    _impl = _kernels_cy
    BACKEND = "cython"
else:
    _impl = _kernels_py
    BACKEND = "python"

axisym_step = _impl.axisym_step
cart1d_step = _impl.cart1d_step
uniform_table_eval = _impl.uniform_table_eval
# the 3d stepper only exists in numpy form (small cross-check grids)
cart3d_step = _kernels_py.cart3d_step
