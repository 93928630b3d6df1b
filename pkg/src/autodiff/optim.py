from __future__ import annotations

import math
from typing import List, Sequence

import numpy as np

from src.core.errors import ConfigError

from .nn import Parameter


def adamw_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray],
    exp_avg: List[np.ndarray],
    exp_avg_sq: List[np.ndarray],
    step: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One decoupled-weight-decay Adam update; ``step`` counts from 1.

    Moment buffers are updated in place, parameters get fresh arrays.
    """
    if lr <= 0:
        raise ConfigError(f"Learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(exp_avg) or len(params) != len(exp_avg_sq):
        raise ConfigError("adamw_step needs one moment slot per parameter")
    bias1 = 1.0 - beta1**step
    bias2 = 1.0 - beta2**step
    for p, g, m, v in zip(params, grads, exp_avg, exp_avg_sq):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        decayed = p.data * (1.0 - lr * weight_decay)
        denom = np.sqrt(v / bias2) + eps
        p.data = decayed - lr * (m / bias1) / denom


class AdamW:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ) -> None:
        if lr <= 0:
            raise ConfigError(f"Learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.exp_avg = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]
        self.exp_avg_sq = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def clip_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients so their global L2 norm is at most ``max_norm``."""
        total = math.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64))) for p in self.params))
        if max_norm > 0 and total > max_norm:
            factor = max_norm / (total + 1e-6)
            for p in self.params:
                p.scale_grad(factor)
        return total

    def step(self) -> None:
        self.step_count += 1
        adamw_step(
            self.params,
            [p.grad for p in self.params],
            self.exp_avg,
            self.exp_avg_sq,
            self.step_count,
            self.lr,
            beta1=self.betas[0],
            beta2=self.betas[1],
            eps=self.eps,
            weight_decay=self.weight_decay,
        )
