from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.core.errors import ContractError

from . import ops
from .tensor import Tensor


class Parameter(Tensor):
    """Trainable leaf tensor; ``name`` is filled in from the owning module path."""

    def __init__(self, data, name: str = "") -> None:
        super().__init__(data, requires_grad=True)
        self.name = name


class Module:
    """Parameter container; parameters are discovered from attributes in
    definition order, recursing into sub-modules and lists of sub-modules."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        seen: set[int] = set()
        for name, param in self._walk(prefix):
            if id(param) in seen:
                continue
            seen.add(id(param))
            yield name, param

    def _walk(self, prefix: str) -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.numpy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ContractError(
                f"Parameter names differ: missing={missing[:5]} unexpected={unexpected[:5]}"
            )
        for name, param in own.items():
            param.data = state[name]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def name_parameters(self) -> None:
        for name, param in self.named_parameters():
            param.name = name

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def uniform_fan_in(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape))


class Conv1d(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        c_in: int,
        c_out: int,
        kernel: int = 1,
        padding: Optional[int] = None,
        bias: bool = True,
    ) -> None:
        self.weight = uniform_fan_in(rng, (c_out, c_in, kernel), c_in * kernel)
        self.bias = Parameter(np.zeros(c_out)) if bias else None
        self.padding = kernel // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, stride=1, padding=self.padding)


class ChannelLayerNorm(Module):
    """Layer norm over the channel dim of a [C, T] map."""

    def __init__(self, channels: int, eps: float = 1e-5) -> None:
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.layer_norm(ops.transpose_last2(x), self.gamma, self.beta, self.eps)
        return ops.transpose_last2(y)
