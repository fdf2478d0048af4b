"""NumPy implementations of the hot kernels (im2col based).

Same call signatures as the compiled `_native` extension; `kernels`
picks one of the two at import time.  Everything is float64 and works
on single samples laid out channels-first: x is (C, H, W), conv weights
are (C_out, C_in, kh, kw).
"""

import numpy as np


def _out_dim(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """(C, Hp, Wp) padded input -> (C*kh*kw, oh*ow) patch matrix."""
    c = xp.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]            # (C, oh, ow, kh, kw)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def conv_forward(x, weight, bias, stride, pad):
    cout, cin, kh, kw = weight.shape
    _, h, w = x.shape
    oh = _out_dim(h, kh, stride, pad)
    ow = _out_dim(w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    y = weight.reshape(cout, -1) @ cols
    if bias is not None:
        y = y + bias[:, None]
    return y.reshape(cout, oh, ow)


def conv_weight_grad(x, gy, stride, pad, kh, kw):
    """Gradient of <gy, conv_forward(x, K)> with respect to K."""
    cout, oh, ow = gy.shape
    cin, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    gw = gy.reshape(cout, -1) @ cols.T
    return gw.reshape(cout, cin, kh, kw)


def conv_input_grad(gy, weight, stride, pad, h, w):
    """Gradient of <gy, conv_forward(x, K)> with respect to x (transposed conv)."""
    cout, cin, kh, kw = weight.shape
    _, oh, ow = gy.shape
    colsg = (weight.reshape(cout, -1).T @ gy.reshape(cout, -1))
    colsg = colsg.reshape(cin, kh, kw, oh, ow)
    dxp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride] += colsg[:, i, j]
    if pad:
        return np.ascontiguousarray(dxp[:, pad : pad + h, pad : pad + w])
    return dxp


def maxpool_forward(x, size, stride):
    """Per-window max and flat (row*W+col) index of the first maximizer.

    Returns (y, idx) with y (C, oh, ow) float64 and idx (C, oh, ow) int64
    indexing into each channel plane of the input.
    """
    c, h, w = x.shape
    oh = _out_dim(h, size, stride, 0)
    ow = _out_dim(w, size, stride, 0)
    windows = np.lib.stride_tricks.sliding_window_view(x, (size, size), axis=(1, 2))
    windows = windows[:, ::stride, ::stride].reshape(c, oh, ow, size * size)
    flat_arg = windows.argmax(axis=-1)                  # first occurrence on ties
    y = np.take_along_axis(windows, flat_arg[..., None], axis=-1)[..., 0]
    rows = (np.arange(oh) * stride)[None, :, None] + flat_arg // size
    cols = (np.arange(ow) * stride)[None, None, :] + flat_arg % size
    idx = rows * w + cols
    return np.ascontiguousarray(y), np.ascontiguousarray(idx.astype(np.int64))
