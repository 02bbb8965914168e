"""3D convolution and transposed convolution on (batch, channel, x, y, z) arrays.

Both are built from two primitives: ``_windows`` (gather every k^3 patch at a
stride, an im2col view) and ``_scatter`` (its adjoint, overlap-add of per-tap
contributions). Convolution gathers forward and scatters backward; the
transposed convolution does the opposite.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import _make


def _windows(x, k, stride):
    """(B, C, X, Y, Z) -> (B, C, oX, oY, oZ, k, k, k) view."""
    w = sliding_window_view(x, (k, k, k), axis=(2, 3, 4))
    return w[:, :, ::stride, ::stride, ::stride]


def _scatter(cols_fn, out_shape, n_out, k, stride, dtype):
    """Overlap-add: ``out[..., a + s*i, ...] += cols_fn(a, b, c)[..., i, ...]``."""
    out = np.zeros(out_shape, dtype=dtype)
    span = stride * (n_out - 1) + 1
    for a in range(k):
        for b in range(k):
            for c in range(k):
                out[:, :, a:a + span:stride, b:b + span:stride, c:c + span:stride] += cols_fn(a, b, c)
    return out


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))


def _crop(x, p):
    if p == 0:
        return x
    return x[:, :, p:-p, p:-p, p:-p]


def conv3d_out_size(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def convT3d_out_size(n, k, stride, padding):
    return (n - 1) * stride - 2 * padding + k


def conv3d(x, W, b=None, stride=1, padding=0):
    """Cross-correlation. W: (C_out, C_in, k, k, k)."""
    xd, Wd = x.data, W.data
    k = Wd.shape[2]
    if xd.shape[1] != Wd.shape[1]:
        raise ValueError(f"conv3d: input has {xd.shape[1]} channels, weight expects {Wd.shape[1]}")
    xp = _pad(xd, padding)
    cols = _windows(xp, k, stride)
    n_out = cols.shape[2]
    y = np.tensordot(cols, Wd, axes=([1, 5, 6, 7], [1, 2, 3, 4]))  # (B, o, o, o, C_out)
    y = np.ascontiguousarray(np.moveaxis(y, -1, 1))
    if b is not None:
        y += b.data.reshape(1, -1, 1, 1, 1)

    def back(g):
        gW = np.tensordot(g, cols, axes=([0, 2, 3, 4], [0, 2, 3, 4]))  # (C_out, C_in, k, k, k)

        def tap(a, bb, c):
            return np.moveaxis(np.tensordot(g, Wd[:, :, a, bb, c], axes=([1], [0])), -1, 1)

        gx = _crop(_scatter(tap, xp.shape, n_out, k, stride, xd.dtype), padding)
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=(0, 2, 3, 4))

    parents = (x, W) if b is None else (x, W, b)
    return _make(y, parents, back, "conv3d")


def conv_transpose3d(x, W, b=None, stride=1, padding=0):
    """Adjoint of :func:`conv3d` in its input. W: (C_in, C_out, k, k, k)."""
    xd, Wd = x.data, W.data
    k = Wd.shape[2]
    if xd.shape[1] != Wd.shape[0]:
        raise ValueError(f"conv_transpose3d: input has {xd.shape[1]} channels, weight expects {Wd.shape[0]}")
    B, _, n = xd.shape[:3]
    full_n = (n - 1) * stride + k
    full_shape = (B, Wd.shape[1], full_n, full_n, full_n)

    def tap(a, bb, c):
        return np.moveaxis(np.tensordot(xd, Wd[:, :, a, bb, c], axes=([1], [0])), -1, 1)

    y = _crop(_scatter(tap, full_shape, n, k, stride, xd.dtype), padding)
    y = np.ascontiguousarray(y)
    if b is not None:
        y += b.data.reshape(1, -1, 1, 1, 1)

    def back(g):
        cols = _windows(_pad(g, padding), k, stride)  # (B, C_out, n, n, n, k, k, k)
        gx = np.tensordot(cols, Wd, axes=([1, 5, 6, 7], [1, 2, 3, 4]))  # (B, n, n, n, C_in)
        gx = np.ascontiguousarray(np.moveaxis(gx, -1, 1))
        gW = np.tensordot(xd, cols, axes=([0, 2, 3, 4], [0, 2, 3, 4]))  # (C_in, C_out, k, k, k)
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=(0, 2, 3, 4))

    parents = (x, W) if b is None else (x, W, b)
    return _make(y, parents, back, "conv_transpose3d")
