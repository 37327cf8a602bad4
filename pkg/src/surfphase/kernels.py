"""Backend selection for the stencil kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` is used. Setting the environment
variable ``SURFPHASE_PURE_PYTHON=1`` forces the numpy path.
"""

import os

from . import _pykernels

if os.environ.get("SURFPHASE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"
    else:
        BACKEND = "cython"

laplacian = _impl.laplacian
avg_grad_mag = _impl.avg_grad_mag
weighted_div_grad_edges = _impl.weighted_div_grad_edges
coupling_div = _impl.coupling_div
coupling_lin = _impl.coupling_lin

__all__ = [
    "BACKEND",
    "laplacian",
    "avg_grad_mag",
    "weighted_div_grad_edges",
    "coupling_div",
    "coupling_lin",
]
