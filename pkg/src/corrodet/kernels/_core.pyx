# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython patch kernels: im2col / col2im over NCHW tensors.

Mirrors _fallback.py exactly (same column ordering, same zero padding), so the
two backends are drop-in replacements for each other.
"""
import numpy as np

cimport numpy as cnp

ctypedef fused real:
    float
    double


def im2col(cnp.ndarray x, int k, int stride, int pad):
    if x.dtype == np.float32:
        return _im2col(np.ascontiguousarray(x, dtype=np.float32), k, stride, pad)
    return _im2col(np.ascontiguousarray(x, dtype=np.float64), k, stride, pad)


def col2im(cnp.ndarray cols, x_shape, int k, int stride, int pad):
    n, c, h, w = x_shape
    if cols.dtype == np.float32:
        return _col2im(np.ascontiguousarray(cols, dtype=np.float32), n, c, h, w, k, stride, pad)
    return _col2im(np.ascontiguousarray(cols, dtype=np.float64), n, c, h, w, k, stride, pad)


def _im2col(real[:, :, :, ::1] x, int k, int stride, int pad):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int oh = (h + 2 * pad - k) // stride + 1
    cdef int ow = (w + 2 * pad - k) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((n, c * k * k, oh * ow), dtype=dtype)
    cdef real[:, :, ::1] cols = out
    cdef int b, ci, ki, kj, oi, oj, row, ih, iw
    for b in range(n):
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    for oi in range(oh):
                        ih = oi * stride + ki - pad
                        if ih < 0 or ih >= h:
                            continue
                        for oj in range(ow):
                            iw = oj * stride + kj - pad
                            if 0 <= iw < w:
                                cols[b, row, oi * ow + oj] = x[b, ci, ih, iw]
    return out


def _col2im(real[:, :, ::1] cols, int n, int c, int h, int w, int k, int stride, int pad):
    cdef int oh = (h + 2 * pad - k) // stride + 1
    cdef int ow = (w + 2 * pad - k) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] xg = out
    cdef int b, ci, ki, kj, oi, oj, row, ih, iw
    for b in range(n):
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    for oi in range(oh):
                        ih = oi * stride + ki - pad
                        if ih < 0 or ih >= h:
                            continue
                        for oj in range(ow):
                            iw = oj * stride + kj - pad
                            if 0 <= iw < w:
                                xg[b, ci, ih, iw] += cols[b, row, oi * ow + oj]
    return out
