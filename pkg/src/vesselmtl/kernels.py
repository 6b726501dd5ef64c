"""Hot inner loops: im2col/col2im, 2x2 max pooling, 1-D squared EDT.

Each kernel has a numba implementation and a numpy implementation. The public
names dispatch on :data:`vesselmtl._accel.USE_NUMBA`; both implementations stay
importable so the benchmark and the tests can compare them directly.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# im2col / col2im
# --------------------------------------------------------------------------

def im2col_numpy(xh, kh, kw, stride, ho, wo):
    """Patch matrix from a padded NHWC array; column order is (kh, kw, C)."""
    n, _, _, c = xh.shape
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=xh.dtype)
    hs, ws = (ho - 1) * stride + 1, (wo - 1) * stride + 1
    for di in range(kh):
        for dj in range(kw):
            cols[:, :, :, di, dj, :] = xh[:, di : di + hs : stride, dj : dj + ws : stride, :]
    return cols.reshape(n * ho * wo, kh * kw * c)


@njit
def im2col_numba(xh, kh, kw, stride, ho, wo):
    n, c = xh.shape[0], xh.shape[3]
    cols = np.empty((n * ho * wo, kh * kw * c), dtype=xh.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for di in range(kh):
                    for dj in range(kw):
                        for ch in range(c):
                            cols[row, col] = xh[b, i * stride + di, j * stride + dj, ch]
                            col += 1
    return cols


def col2im_numpy(dcols, xshape, kh, kw, stride, ho, wo):
    """Adjoint of :func:`im2col_numpy`; ``xshape`` is the padded NHWC shape."""
    n, _, _, c = xshape
    d = dcols.reshape(n, ho, wo, kh, kw, c)
    dx = np.zeros(xshape, dtype=dcols.dtype)
    hs, ws = (ho - 1) * stride + 1, (wo - 1) * stride + 1
    for di in range(kh):
        for dj in range(kw):
            dx[:, di : di + hs : stride, dj : dj + ws : stride, :] += d[:, :, :, di, dj, :]
    return dx


@njit
def _col2im_numba(dcols, n, hp, wp, c, kh, kw, stride, ho, wo):
    dx = np.zeros((n, hp, wp, c), dtype=dcols.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                row = (b * ho + i) * wo + j
                col = 0
                for di in range(kh):
                    for dj in range(kw):
                        for ch in range(c):
                            dx[b, i * stride + di, j * stride + dj, ch] += dcols[row, col]
                            col += 1
    return dx


def col2im_numba(dcols, xshape, kh, kw, stride, ho, wo):
    n, hp, wp, c = xshape
    return _col2im_numba(dcols, n, hp, wp, c, kh, kw, stride, ho, wo)


# --------------------------------------------------------------------------
# 2x2 max pooling; ties go to the first element in row-major order
# --------------------------------------------------------------------------

def maxpool2_forward_numpy(x):
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = np.argmax(win, axis=-1).astype(np.int8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


@njit
def maxpool2_forward_numba(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int8)
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[b, ch, 2 * i, 2 * j]
                    k = 0
                    for t in range(1, 4):
                        v = x[b, ch, 2 * i + t // 2, 2 * j + t % 2]
                        if v > best:
                            best = v
                            k = t
                    out[b, ch, i, j] = best
                    arg[b, ch, i, j] = k
    return out, arg


def maxpool2_backward_numpy(dout, arg):
    n, c, ho, wo = dout.shape
    dwin = np.zeros((n, c, ho, wo, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    return dwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)


@njit
def maxpool2_backward_numba(dout, arg):
    n, c, ho, wo = dout.shape
    dx = np.zeros((n, c, 2 * ho, 2 * wo), dtype=dout.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    t = arg[b, ch, i, j]
                    dx[b, ch, 2 * i + t // 2, 2 * j + t % 2] = dout[b, ch, i, j]
    return dx


# --------------------------------------------------------------------------
# exact 1-D squared distance transform (lower envelope of parabolas)
# --------------------------------------------------------------------------

@njit
def edt_sq_rows(f):
    """Squared EDT along the last axis of a 2-D float64 array.

    ``inf`` marks sites that are not seeds. Rows with no finite site stay ``inf``.
    """
    rows, n = f.shape
    out = np.empty_like(f)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    for r in range(rows):
        k = -1
        for q in range(n):
            fq = f[r, q]
            if fq == np.inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            while True:
                p = v[k]
                s = ((fq + q * q) - (f[r, p] + p * p)) / (2.0 * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                out[r, q] = np.inf
            continue
        k = 0
        for q in range(n):
            while z[k + 1] < q:
                k += 1
            p = v[k]
            out[r, q] = (q - p) * (q - p) + f[r, p]
    return out


if USE_NUMBA:
    im2col, col2im = im2col_numba, col2im_numba
    maxpool2_forward, maxpool2_backward = maxpool2_forward_numba, maxpool2_backward_numba
else:
    im2col, col2im = im2col_numpy, col2im_numpy
    maxpool2_forward, maxpool2_backward = maxpool2_forward_numpy, maxpool2_backward_numpy
