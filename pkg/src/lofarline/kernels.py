"""Backend selection for the hot kernels.

The compiled extension (`lofarline._native`, Cython) is used when it
imports; otherwise the NumPy fallback takes over.  Set
``LOFARLINE_KERNELS=python`` to force the fallback or
``LOFARLINE_KERNELS=native`` to require the extension.
"""

import os

import numpy as np

from . import _kernels_py

_requested = os.environ.get("LOFARLINE_KERNELS", "auto")

if _requested == "python":
    _impl = _kernels_py
    BACKEND = "python"
elif _requested in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        _impl = _kernels_py
        BACKEND = "python"
else:
    raise ValueError(f"unknown LOFARLINE_KERNELS value: {_requested!r}")


def conv_forward(x, weight, bias, stride, pad):
    return _impl.conv_forward(x, weight, bias, stride, pad)


def conv_weight_grad(x, gy, stride, pad, kh, kw):
    return _impl.conv_weight_grad(x, gy, stride, pad, kh, kw)


def conv_input_grad(gy, weight, stride, pad, h, w):
    return _impl.conv_input_grad(gy, weight, stride, pad, h, w)


def maxpool_forward(x, size, stride):
    return _impl.maxpool_forward(x, size, stride)


def pool_gather(x, idx):
    """Read the recorded per-window maximizer values: x (C,H,W) -> (C,oh,ow)."""
    c = x.shape[0]
    flat = x.reshape(c, -1)
    return np.take_along_axis(flat, idx.reshape(c, -1), axis=1).reshape(idx.shape)


def pool_scatter(gy, idx, h, w):
    """Adjoint of pool_gather: route gy (C,oh,ow) back to the recorded maximizers."""
    c = gy.shape[0]
    out = np.zeros((c, h * w))
    np.add.at(out, (np.repeat(np.arange(c), idx[0].size), idx.reshape(-1)), gy.reshape(-1))
    return out.reshape(c, h, w)
