"""Differentiable primitives.

Every op validates shapes loudly, computes its forward value with numpy and
registers a closure producing one gradient per input. Elementwise ops need
identical shapes; only ``matmul`` broadcasts, over leading batch dims, and
``expand`` broadcasts explicitly.
"""
from __future__ import annotations

import builtins
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.core.errors import ConfigError, ContractError, ShapeError

from .tensor import Tensor, as_tensor

Scalar = Union[int, float]
Operand = Union[Tensor, Scalar]


def _binary_operands(a: Operand, b: Operand, op: str) -> Tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise ContractError(f"{op} needs at least one tensor operand")
    if not isinstance(a, Tensor):
        a = Tensor(np.full(b.shape, a))
    if not isinstance(b, Tensor):
        b = Tensor(np.full(a.shape, b))
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def add(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_operands(a, b, "add")
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_operands(a, b, "sub")
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def multiply(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_operands(a, b, "multiply")
    ad, bd = a.data, b.data
    return Tensor._from_op(ad * bd, (a, b), lambda g: (g * bd, g * ad), "multiply")


def divide(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_operands(a, b, "divide")
    if np.any(b.data == 0):
        raise ContractError("divide: zero in denominator")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g / bd, -g * ad / (bd * bd)

    return Tensor._from_op(ad / bd, (a, b), grad_fn, "divide")


def neg(x: Tensor) -> Tensor:
    return Tensor._from_op(-x.data, (x,), lambda g: (-g,), "neg")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._from_op(x.data * c, (x,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from exc
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return Tensor._from_op(out, (a, b), grad_fn, "matmul")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def transpose_last2(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError(f"transpose_last2 needs rank >= 2, got {x.shape}")
    out = np.swapaxes(x.data, -1, -2)
    return Tensor._from_op(out, (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    src_shape = x.shape
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(src_shape),), "reshape")


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast size-1 (or missing leading) dims of ``x`` up to ``shape``."""
    shape = tuple(int(s) for s in shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeError(f"expand: cannot broadcast {x.shape} to {shape}") from exc
    src_shape = x.shape
    return Tensor._from_op(out, (x,), lambda g: (_unbroadcast(g, src_shape),), "expand")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis
        ):
            raise ShapeError(
                f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}"
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(
        out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)), "concat"
    )


def slice(x: Tensor, index) -> Tensor:
    """Basic (non-fancy) indexing with ints and slices."""
    if not isinstance(index, tuple):
        index = (index,)
    for item in index:
        if not isinstance(item, (int, builtins.slice, type(Ellipsis))):
            raise ContractError(f"slice supports ints and slices only, got {item!r}")
    out = x.data[index]
    src_shape, dtype = x.shape, x.dtype

    def grad_fn(g):
        full = np.zeros(src_shape, dtype=dtype)
        full[index] = g
        return (full,)

    return Tensor._from_op(out, (x,), grad_fn, "slice")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    out = stable_sigmoid(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    out = np.logaddexp(0.0, xd)
    return Tensor._from_op(out, (x,), lambda g: (g * stable_sigmoid(xd),), "softplus")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ContractError("log: input must be strictly positive")
    xd = x.data
    return Tensor._from_op(np.log(xd), (x,), lambda g: (g / xd,), "log")


def power(x: Tensor, p: float) -> Tensor:
    p = float(p)
    xd = x.data
    if not p.is_integer() and np.any(xd < 0):
        raise ContractError("power: negative base with non-integer exponent")
    out = np.power(xd, p)

    def grad_fn(g):
        if p == 0.0:
            return (np.zeros_like(g),)
        return (g * p * np.power(xd, p - 1.0),)

    return Tensor._from_op(out, (x,), grad_fn, "power")


def minimum(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_operands(a, b, "minimum")
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return Tensor._from_op(out, (a, b), lambda g: (g * take_a, g * ~take_a), "minimum")


def maximum(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_operands(a, b, "maximum")
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)
    return Tensor._from_op(out, (a, b), lambda g: (g * take_a, g * ~take_a), "maximum")


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    src_shape = x.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src_shape).copy(),)

    return Tensor._from_op(out, (x,), grad_fn, "sum")


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax_lastdim(x: Tensor, key_mask: Optional[np.ndarray] = None) -> Tensor:
    """Row softmax over the last dim with max subtraction.

    ``key_mask`` (bool, broadcastable to ``x``) marks valid positions; masked
    entries get -inf before normalisation and weight exactly 0.
    """
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ShapeError(f"softmax_lastdim needs a non-empty last dim, got {x.shape}")
    logits = x.data
    if key_mask is not None:
        mask = np.broadcast_to(np.asarray(key_mask, dtype=bool), logits.shape)
        if not np.all(mask.any(axis=-1)):
            raise ContractError("softmax_lastdim: a row has no valid keys")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return Tensor._from_op(out, (x,), grad_fn, "softmax")


def conv1d(
    x: Tensor,
    w: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """x: [C_in, T], w: [C_out, C_in, k], bias: [C_out] -> [C_out, T_out]."""
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeError(f"conv1d expects x [C_in, T] and w [C_out, C_in, k], got {x.shape}, {w.shape}")
    c_out, c_in, k = w.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel size must be odd, got {k}")
    if x.shape[0] != c_in:
        raise ShapeError(f"conv1d: input channels {x.shape[0]} != weight channels {c_in} ({x.shape} vs {w.shape})")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} != ({c_out},)")
    if stride < 1 or padding < 0:
        raise ConfigError(f"conv1d: invalid stride {stride} / padding {padding}")
    t_in = x.shape[1]
    if t_in + 2 * padding < k:
        raise ShapeError(f"conv1d: input length {t_in} with padding {padding} is shorter than kernel {k}")
    t_out = (t_in + 2 * padding - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (padding, padding)))
    windows = sliding_window_view(xp, k, axis=1)[:, ::stride, :]  # [C_in, T_out, k]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(c_in * k, t_out)
    w2 = w.data.reshape(c_out, c_in * k)
    out = w2 @ cols
    if bias is not None:
        out = out + bias.data[:, None]

    def grad_fn(g):
        gw = (g @ cols.T).reshape(c_out, c_in, k)
        gcols = (w2.T @ g).reshape(c_in, k, t_out)
        gxp = np.zeros_like(xp)
        span = stride * (t_out - 1) + 1
        for j in range(k):
            gxp[:, j : j + span : stride] += gcols[:, j, :]
        gx = gxp[:, padding : padding + t_in]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=1))
        return tuple(grads)

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._from_op(out, parents, grad_fn, "conv1d")


def maxpool1d(x: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """Channel-wise max over windows; ties route gradient to the lowest index."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"maxpool1d expects [C, T] with T >= 1, got {x.shape}")
    if kernel < 1 or stride < 1 or not 0 <= padding < kernel:
        raise ConfigError(f"maxpool1d: invalid kernel {kernel} / stride {stride} / padding {padding}")
    c, t_in = x.shape
    if t_in + 2 * padding < kernel:
        raise ShapeError(f"maxpool1d: input length {t_in} is shorter than kernel {kernel}")
    xp = np.pad(x.data, ((0, 0), (padding, padding)), constant_values=-np.inf)
    windows = sliding_window_view(xp, kernel, axis=1)[:, ::stride, :]  # [C, T_out, k]
    t_out = windows.shape[1]
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    src = arg + np.arange(t_out)[None, :] * stride - padding  # index into x

    def grad_fn(g):
        gx = np.zeros((c, t_in), dtype=g.dtype)
        rows = np.broadcast_to(np.arange(c)[:, None], src.shape)
        np.add.at(gx, (rows, src), g)
        return (gx,)

    return Tensor._from_op(out, (x,), grad_fn, "maxpool1d")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv_std
    gd = gamma.data
    out = xhat * gd + beta.data
    lead = tuple(range(xd.ndim - 1))

    def grad_fn(g):
        dxhat = g * gd
        gx = inv_std / d * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True)
        )
        return gx, np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

    return Tensor._from_op(out, (x, gamma, beta), grad_fn, "layer_norm")


Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: multiply(self, other)
Tensor.__rmul__ = lambda self, other: multiply(other, self)
Tensor.__truediv__ = lambda self, other: divide(self, other)
Tensor.__rtruediv__ = lambda self, other: divide(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, as_tensor(other))
