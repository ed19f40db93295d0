"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``MICROOPT_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("MICROOPT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
# numpy's BLAS matmul beats the compiled loop at these layer widths
mlp_dist_grad = _kernels_py.mlp_dist_grad
surrogate_reduce = _impl.surrogate_reduce
strict_reduce = _impl.strict_reduce

# scalar helpers are cheap; always the numpy versions
logistic = _kernels_py.logistic
softplus = _kernels_py.softplus


def backends():
    """Map of available backend name -> module."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out[_kernels.BACKEND] = _kernels
    except ImportError:
        pass
    return out
