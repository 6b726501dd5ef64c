"""Differentiable ops used by the network and its losses.

Only bias-over-channels broadcasting is supported; every other binary op
requires identical shapes.
"""
import numpy as np

from . import kernels
from .errors import ContractError, DimensionError, GeometryError
from .tensor import Tensor, record


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _need4d(x, name):
    if x.data.ndim != 4:
        raise DimensionError(f"{name} expects a 4-D NCHW tensor, got shape {x.shape}")


def _same_shape(a, b, name):
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def conv2d(x, weight, bias, stride=1, padding=0):
    """2-D cross-correlation, NCHW input and OIHW weight."""
    _need4d(x, "conv2d input")
    _need4d(weight, "conv2d weight")
    if stride < 1 or padding < 0:
        raise GeometryError(f"stride must be >= 1 and padding >= 0 (got {stride}, {padding})")
    n, c, h, w = x.shape
    o, i, kh, kw = weight.shape
    if c != i:
        raise DimensionError(f"conv2d: input has {c} channels but weight expects {i}")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {o} output channels")
    hp, wp = h + 2 * padding, w + 2 * padding
    if hp < kh or wp < kw:
        raise GeometryError(f"conv2d: padded input {hp}x{wp} smaller than kernel {kh}x{kw}")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    if ho <= 0 or wo <= 0 or n == 0 or o == 0:
        raise GeometryError("conv2d: zero-sized output")

    xh = x.data.transpose(0, 2, 3, 1)
    if padding:
        xh = np.pad(xh, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    xh = np.ascontiguousarray(xh)
    cols = kernels.im2col(xh, kh, kw, stride, ho, wo)
    wmat = np.ascontiguousarray(weight.data.transpose(0, 2, 3, 1).reshape(o, -1))
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    padded_shape = xh.shape

    def _backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
        dx = dw = db = None
        if x.requires_grad:
            dcols = g2 @ wmat
            dxh = kernels.col2im(dcols, padded_shape, kh, kw, stride, ho, wo)
            dx = np.ascontiguousarray(dxh[:, padding : padding + h, padding : padding + w, :].transpose(0, 3, 1, 2))
        if weight.requires_grad:
            dw = np.ascontiguousarray((g2.T @ cols).reshape(o, kh, kw, c).transpose(0, 3, 1, 2))
        if bias is not None and bias.requires_grad:
            db = g2.sum(axis=0)
        return dx, dw, db

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", out, inputs, _backward)


def max_pool2d(x, window=2):
    """2x2 max pooling, stride 2. Ties route the gradient to the first element (row-major)."""
    _need4d(x, "max_pool2d")
    if window != 2:
        raise GeometryError(f"only window=2 is supported, got {window}")
    h, w = x.shape[2:]
    if h % 2 or w % 2 or h == 0 or w == 0:
        raise GeometryError(f"max_pool2d: spatial dims {h}x{w} not divisible by 2")
    out, arg = kernels.maxpool2_forward(np.ascontiguousarray(x.data))

    def _backward(g):
        return (kernels.maxpool2_backward(np.ascontiguousarray(g), arg),)

    return record("max_pool2d", out, (x,), _backward)


def upsample_nearest2(x):
    _need4d(x, "upsample_nearest2")
    n, c, h, w = x.shape
    out = np.ascontiguousarray(np.broadcast_to(x.data[:, :, :, None, :, None], (n, c, h, 2, w, 2)).reshape(n, c, 2 * h, 2 * w))

    def _backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return record("upsample_nearest2", out, (x,), _backward)


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)

    def _backward(g):
        return (g * mask,)

    return record("relu", out, (x,), _backward)


def sigmoid_array(z):
    """Overflow-free logistic function on a plain array."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def absolute(x):
    """Elementwise ``|x|``; the subgradient at 0 is taken as 0."""
    sign = np.sign(x.data)

    def _backward(g):
        return (g * sign,)

    return record("abs", np.abs(x.data), (x,), _backward)


def sigmoid(x):
    s = sigmoid_array(x.data)

    def _backward(g):
        return (g * s * (1 - s),)

    return record("sigmoid", s, (x,), _backward)


def concat_channels(a, b):
    _need4d(a, "concat_channels")
    _need4d(b, "concat_channels")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"concat_channels: N/H/W mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise DimensionError(f"concat_channels: dtype mismatch {a.dtype} vs {b.dtype}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def _backward(g):
        return np.ascontiguousarray(g[:, :ca]), np.ascontiguousarray(g[:, ca:])

    return record("concat_channels", out, (a, b), _backward)


def bce_with_logits(logits, target):
    """Mean binary cross-entropy on raw logits, in the overflow-free form."""
    target = _as_tensor(target)
    _same_shape(logits, target, "bce_with_logits")
    t = target.data.astype(logits.dtype, copy=False)
    if t.size and (t.min() < 0 or t.max() > 1):
        raise ContractError("bce_with_logits: targets must lie in [0, 1]")
    z = logits.data
    n = z.size
    loss = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = np.asarray(loss.mean(), dtype=z.dtype)

    def _backward(g):
        return ((sigmoid_array(z) - t) * (g / n),)

    return record("bce_with_logits", out, (logits,), _backward)


def mse(pred, target):
    target = _as_tensor(target)
    _same_shape(pred, target, "mse")
    diff = pred.data - target.data.astype(pred.dtype, copy=False)
    n = diff.size
    out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)

    def _backward(g):
        return (diff * (2 * g / n),)

    return record("mse", out, (pred,), _backward)


def add(a, b):
    _same_shape(a, b, "add")
    out = a.data + b.data

    def _backward(g):
        return g, g

    return record("add", out, (a, b), _backward)


def scale(a, c):
    """Multiply by a constant. ``c`` is a plain number and receives no gradient."""
    if isinstance(c, Tensor):
        raise ContractError("scale takes a constant, not a Tensor")
    c = float(c)
    out = (a.data * c).astype(a.dtype, copy=False)

    def _backward(g):
        return (g * c,)

    return record("scale", out, (a,), _backward)


def sum_all(a):
    out = np.asarray(a.data.sum(), dtype=a.dtype)
    shape = a.shape

    def _backward(g):
        return (np.full(shape, g, dtype=a.dtype),)

    return record("sum", out, (a,), _backward)
