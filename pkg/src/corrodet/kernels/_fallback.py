"""Numpy implementation of the patch kernels.

Loops run over the k*k kernel offsets only; everything else is sliced, so the
cost is a handful of large contiguous copies.
"""
import numpy as np


def _padded(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    xp = _padded(x, pad)
    cols = np.empty((n, c * k * k, oh * ow), dtype=x.dtype)
    idx = 0
    for ci in range(c):
        for ki in range(k):
            for kj in range(k):
                patch = xp[:, ci, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
                cols[:, idx, :] = patch.reshape(n, oh * ow)
                idx += 1
    return cols


def col2im(cols, x_shape, k, stride, pad):
    n, c, h, w = x_shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    idx = 0
    for ci in range(c):
        for ki in range(k):
            for kj in range(k):
                xp[:, ci, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += cols[
                    :, idx, :
                ].reshape(n, oh, ow)
                idx += 1
    if pad == 0:
        return xp
    return np.ascontiguousarray(xp[:, :, pad : pad + h, pad : pad + w])
