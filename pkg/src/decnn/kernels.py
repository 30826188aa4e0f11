"""Kernel backend selection.

The compiled extension is preferred. Set ``DECNN_BACKEND=python`` to force
the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("DECNN_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

im2col = _impl.im2col
prelu_forward = _impl.prelu_forward
prelu_backward = _impl.prelu_backward

__all__ = ["BACKEND", "im2col", "prelu_forward", "prelu_backward"]
