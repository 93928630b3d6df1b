from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ContractError, NumericError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = {"dtype": np.dtype(np.float32), "grad_enabled": True}


def get_dtype() -> np.dtype:
    return _state["dtype"]


def set_dtype(dtype: str | np.dtype) -> None:
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"Unsupported precision: {dt}")
    _state["dtype"] = dt


@contextmanager
def precision(dtype: str | np.dtype) -> Iterator[None]:
    """Temporarily switch the dtype new tensors are created with.

    Training runs at float32; gradient checks run under ``precision("float64")``.
    """
    previous = _state["dtype"]
    set_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = previous


def grad_enabled() -> bool:
    return bool(_state["grad_enabled"])


@contextmanager
def no_grad() -> Iterator[None]:
    previous = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = previous


class Tensor:
    """Immutable n-d array that records how it was produced.

    ``data`` is read-only; ops build new tensors. ``grad`` exists iff
    ``requires_grad`` and accumulates across ``backward`` calls until
    ``zero_grad``.
    """

    __slots__ = ("_data", "requires_grad", "_grad", "_parents", "_backward", "op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self._data = _freeze(np.array(data, dtype=get_dtype()))
        self.requires_grad = bool(requires_grad)
        self._grad: Optional[np.ndarray] = None
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = "leaf"
        _check_finite(self._data, "tensor construction")

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out._data = _freeze(np.asarray(data, dtype=_result_dtype(parents)))
        out._grad = None
        out.op = op
        out.requires_grad = grad_enabled() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, values) -> None:
        arr = np.array(values, dtype=self._data.dtype)
        if arr.shape != self._data.shape:
            raise ShapeError(f"Cannot assign shape {arr.shape} to tensor of shape {self.shape}")
        _check_finite(arr, "assignment")
        self._data = _freeze(arr)

    @property
    def grad(self) -> Optional[np.ndarray]:
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self._data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def scale_grad(self, factor: float) -> None:
        if self._grad is not None:
            self._grad = self._grad * factor

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return np.array(self._data)

    def item(self) -> float:
        if self._data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self._data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"


class Graph:
    """Operations reachable from an output, in topological order."""

    def __init__(self, nodes: List[Tensor]) -> None:
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited: set[int] = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    graph = Graph.from_output(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._grad is None:
            node._grad = g.astype(node.dtype, copy=True)
        else:
            node._grad = (node._grad + g).astype(node.dtype, copy=False)
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _result_dtype(parents: Sequence[Tensor]) -> np.dtype:
    for p in parents:
        return p.dtype
    return get_dtype()


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"Non-finite values produced by {where}")
