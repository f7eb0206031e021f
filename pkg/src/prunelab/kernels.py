"""Backend selection for the hot convolution/pooling kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``PRUNELAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("PRUNELAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward

__all__ = ["BACKEND", "im2col", "col2im", "maxpool_forward", "maxpool_backward"]
