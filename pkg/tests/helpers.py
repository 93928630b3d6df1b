from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from src.autodiff.tensor import Tensor


def numeric_grad(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of the scalar ``fn()`` with respect to ``tensor``."""
    base = tensor.numpy()
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        plus[idx] += eps
        tensor.data = plus
        f_plus = fn().item()
        minus = base.copy()
        minus[idx] -= eps
        tensor.data = minus
        f_minus = fn().item()
        grad[idx] = (f_plus - f_minus) / (2.0 * eps)
    tensor.data = base
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / scale


def gradient_error(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-6) -> float:
    """Worst relative error between backward() and finite differences.

    Call under ``precision("float64")``.
    """
    for t in tensors:
        t.zero_grad()
    fn().backward()
    analytic = [np.array(t.grad) for t in tensors]
    return max(relative_error(a, numeric_grad(fn, t, eps)) for a, t in zip(analytic, tensors))


def sampled_gradient_error(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    rng: np.random.Generator,
    per_tensor: int = 3,
    eps: float = 1e-6,
) -> float:
    """Like ``gradient_error`` but probes a few random entries of each tensor."""
    for t in tensors:
        t.zero_grad()
    fn().backward()
    analytic, numeric = [], []
    for t in tensors:
        grad = np.array(t.grad)
        base = t.numpy()
        flat = rng.choice(base.size, size=min(per_tensor, base.size), replace=False)
        for i in flat:
            idx = np.unravel_index(i, base.shape)
            plus, minus = base.copy(), base.copy()
            plus[idx] += eps
            minus[idx] -= eps
            t.data = plus
            f_plus = fn().item()
            t.data = minus
            f_minus = fn().item()
            t.data = base
            analytic.append(grad[idx])
            numeric.append((f_plus - f_minus) / (2.0 * eps))
    return relative_error(np.array(analytic), np.array(numeric))
