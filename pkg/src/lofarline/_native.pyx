# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (single-sample, channels-first).

Signatures mirror `_kernels_py`; `kernels` selects whichever imports.
The inner loops run over raw row pointers so the C compiler can prove
non-aliasing and vectorize them.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv_forward(double[:, :, ::1] x, double[:, :, :, ::1] weight, bias, int stride, int pad):
    cdef int cout = weight.shape[0]
    cdef int cin = weight.shape[1]
    cdef int kh = weight.shape[2]
    cdef int kw = weight.shape[3]
    cdef int h = x.shape[1]
    cdef int w = x.shape[2]
    cdef int oh = (h + 2 * pad - kh) // stride + 1
    cdef int ow = (w + 2 * pad - kw) // stride + 1
    y_arr = np.zeros((cout, oh, ow), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef double[::1] b
    cdef int has_bias = bias is not None
    if has_bias:
        b = bias
    cdef int co, ci, oi, oj, ki, kj, ii, jj0, oj_lo, oj_hi
    cdef double wv
    cdef double *yrow
    cdef double *xrow
    for co in range(cout):
        if has_bias:
            for oi in range(oh):
                yrow = &y[co, oi, 0]
                for oj in range(ow):
                    yrow[oj] = b[co]
    # One kernel tap at a time: each inner loop is an axpy over a pair of
    # rows, which vectorizes (with a runtime alias/stride check).
    for ci in range(cin):
        for ki in range(kh):
            for co in range(cout):
                for oi in range(oh):
                    ii = oi * stride + ki - pad
                    if ii < 0 or ii >= h:
                        continue
                    yrow = &y[co, oi, 0]
                    xrow = &x[ci, ii, 0]
                    for kj in range(kw):
                        wv = weight[co, ci, ki, kj]
                        jj0 = kj - pad
                        oj_lo = 0 if jj0 >= 0 else (-jj0 + stride - 1) // stride
                        oj_hi = min(ow, (w - 1 - jj0) // stride + 1)
                        if stride == 1:
                            for oj in range(oj_lo, oj_hi):
                                yrow[oj] += wv * xrow[oj + jj0]
                        else:
                            for oj in range(oj_lo, oj_hi):
                                yrow[oj] += wv * xrow[oj * stride + jj0]
    return y_arr


def conv_weight_grad(double[:, :, ::1] x, double[:, :, ::1] gy, int stride, int pad, int kh, int kw):
    cdef int cin = x.shape[0]
    cdef int h = x.shape[1]
    cdef int w = x.shape[2]
    cdef int cout = gy.shape[0]
    cdef int oh = gy.shape[1]
    cdef int ow = gy.shape[2]
    gw_arr = np.zeros((cout, cin, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef int co, ci, oi, oj, ki, kj, ii, jj0, oj_lo, oj_hi
    cdef double acc
    cdef double *grow
    cdef double *xrow
    # Each kernel tap is a dot product of gy rows with (strided) x rows;
    # the column reduction vectorizes.
    for co in range(cout):
        for ci in range(cin):
            for ki in range(kh):
                for kj in range(kw):
                    jj0 = kj - pad
                    oj_lo = 0 if jj0 >= 0 else (-jj0 + stride - 1) // stride
                    oj_hi = min(ow, (w - 1 - jj0) // stride + 1)
                    acc = 0.0
                    for oi in range(oh):
                        ii = oi * stride + ki - pad
                        if ii < 0 or ii >= h:
                            continue
                        grow = &gy[co, oi, 0]
                        xrow = &x[ci, ii, 0]
                        if stride == 1:
                            for oj in range(oj_lo, oj_hi):
                                acc += grow[oj] * xrow[oj + jj0]
                        else:
                            for oj in range(oj_lo, oj_hi):
                                acc += grow[oj] * xrow[oj * stride + jj0]
                    gw[co, ci, ki, kj] = acc
    return gw_arr


def conv_input_grad(double[:, :, ::1] gy, double[:, :, :, ::1] weight, int stride, int pad, int h, int w):
    cdef int cout = weight.shape[0]
    cdef int cin = weight.shape[1]
    cdef int kh = weight.shape[2]
    cdef int kw = weight.shape[3]
    cdef int oh = gy.shape[1]
    cdef int ow = gy.shape[2]
    gx_arr = np.zeros((cin, h, w), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef int co, ci, oi, oj, ki, kj, ii, jj0, oj_lo, oj_hi
    cdef double wv
    cdef double *grow
    cdef double *gxrow
    # Scatter one kernel tap at a time: gx writes and gy reads are both
    # row-linear over the column loop, so it vectorizes.
    for co in range(cout):
        for ci in range(cin):
            for ki in range(kh):
                for kj in range(kw):
                    wv = weight[co, ci, ki, kj]
                    jj0 = kj - pad
                    oj_lo = 0 if jj0 >= 0 else (-jj0 + stride - 1) // stride
                    oj_hi = min(ow, (w - 1 - jj0) // stride + 1)
                    for oi in range(oh):
                        ii = oi * stride + ki - pad
                        if ii < 0 or ii >= h:
                            continue
                        grow = &gy[co, oi, 0]
                        gxrow = &gx[ci, ii, 0]
                        if stride == 1:
                            for oj in range(oj_lo, oj_hi):
                                gxrow[oj + jj0] += wv * grow[oj]
                        else:
                            for oj in range(oj_lo, oj_hi):
                                gxrow[oj * stride + jj0] += wv * grow[oj]
    return gx_arr


def maxpool_forward(double[:, :, ::1] x, int size, int stride):
    cdef int c = x.shape[0]
    cdef int h = x.shape[1]
    cdef int w = x.shape[2]
    cdef int oh = (h - size) // stride + 1
    cdef int ow = (w - size) // stride + 1
    y_arr = np.zeros((c, oh, ow), dtype=np.float64)
    idx_arr = np.zeros((c, oh, ow), dtype=np.int64)
    cdef double[:, :, ::1] y = y_arr
    cdef long long[:, :, ::1] idx = idx_arr
    cdef int ci, oi, oj, ki, kj, ii, jj
    cdef double best, v
    cdef long long best_idx
    for ci in range(c):
        for oi in range(oh):
            for oj in range(ow):
                best = -1e308
                best_idx = 0
                for ki in range(size):
                    ii = oi * stride + ki
                    for kj in range(size):
                        jj = oj * stride + kj
                        v = x[ci, ii, jj]
                        if v > best:
                            best = v
                            best_idx = ii * w + jj
                y[ci, oi, oj] = best
                idx[ci, oi, oj] = best_idx
    return y_arr, idx_arr
