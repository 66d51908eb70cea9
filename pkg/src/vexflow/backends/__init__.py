"""Backend selection for the pointwise hot kernels.

The compiled Cython extension is preferred; the pure-NumPy fallback is used
when the extension is unavailable or when VEXFLOW_PURE is set in the
environment.  Both expose `flux(a, p, eps)` and `potential(a, p, eps)` on
flattened (M, d) / (M,) arrays with identical semantics.
"""

import os

from . import _kernels_py

if os.environ.get("VEXFLOW_PURE"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

flux = _impl.flux
potential = _impl.potential
BACKEND = _impl.BACKEND

__all__ = ["flux", "potential", "BACKEND"]
