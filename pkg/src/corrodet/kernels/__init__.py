"""Convolution data-movement kernels (im2col / col2im).

Two interchangeable implementations:

* ``_core`` — Cython extension, compiled at install time.
* ``_fallback`` — pure numpy (slice loops / stride tricks).

The extension is preferred when importable; set ``CORRODET_NO_EXT=1`` to force
the fallback. Both produce bit-identical arrays, so model training and
checkpoints are backend-independent.
"""
import os

from . import _fallback

if os.environ.get("CORRODET_NO_EXT"):
    _impl = _fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x, k, stride, pad):
    """Unfold (N, C, H, W) into (N, C*k*k, out_h*out_w) patch columns."""
    return _impl.im2col(x, k, stride, pad)


def col2im(cols, x_shape, k, stride, pad):
    """Adjoint of im2col: scatter-add columns back into (N, C, H, W)."""
    return _impl.col2im(cols, x_shape, k, stride, pad)
