# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Tensor and reverse-mode graph machinery."""

import contextlib
import contextvars
from abc import ABC, abstractmethod
from collections.abc import Iterator
from typing import Any

import numpy as np

from errornet.utils.errors import ErrorNetError, NumericalError, UsageError

__all__ = [
    "DimensionError",
    "Function",
    "Graph",
    "Tensor",
    "backward",
    "get_default_dtype",
    "is_grad_enabled",
    "no_grad",
    "precision",
]

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)
_default_dtype: contextvars.ContextVar[type[np.floating[Any]]] = contextvars.ContextVar(
    "default_dtype", default=np.float32
)


class DimensionError(ErrorNetError):
    """Operand shapes are incompatible with an operation."""


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def get_default_dtype() -> type[np.floating[Any]]:
    return _default_dtype.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them for the backward pass."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextlib.contextmanager
def precision(dtype: type[np.floating[Any]]) -> Iterator[None]:
    """Select the float type new tensors are created with (float64 for gradient checks)."""
    if dtype not in (np.float32, np.float64):
        raise UsageError(f"Unsupported precision: {dtype}")
    token = _default_dtype.set(dtype)
    try:
        yield
    finally:
        _default_dtype.reset(token)


class Function(ABC):
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps the gradient of the
    output to one gradient (or None) per input, in input order.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs: tuple[Tensor, ...] = inputs

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        pass

    @abstractmethod
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        pass

    @property
    def kind(self) -> str:
        return type(self).__name__

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*inputs)
        out_data = func.forward(*(t.data for t in inputs), **kwargs)
        if not np.all(np.isfinite(out_data)):
            raise NumericalError(f"{func.kind} produced non-finite values")
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        out = Tensor(out_data, requires_grad=requires_grad, _keep_dtype=True)
        if requires_grad:
            out.creator = func
        return out


class Tensor:
    """Dense N-dimensional float array with optional gradient tracking."""

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        _keep_dtype: bool = False,
    ):
        array = np.asarray(data)
        if not _keep_dtype or not np.issubdtype(array.dtype, np.floating):
            array = array.astype(get_default_dtype(), copy=False)
        self.data: np.ndarray = array
        self.requires_grad: bool = requires_grad
        self.grad: np.ndarray | None = None
        self.creator: Function | None = None
        self.name: str | None = name
        self._consumed: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, _keep_dtype=True)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise DimensionError(f"Gradient shape {grad.shape} does not match {self.data.shape}")
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor | float") -> "Tensor":
        from errornet.autodiff import functional as F

        return F.add(self, other)

    def __radd__(self, other: float) -> "Tensor":
        return self.__add__(other)

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        from errornet.autodiff import functional as F

        return F.sub(self, other)

    def __rsub__(self, other: float) -> "Tensor":
        from errornet.autodiff import functional as F

        return F.sub(F.as_tensor(other, like=self), self)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        from errornet.autodiff import functional as F

        return F.mul(self, other)

    def __rmul__(self, other: float) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


class Graph:
    """Topologically ordered view of the operations recorded under a scalar loss."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes: list[Tensor] = nodes
        self.operations: list[Function] = [n.creator for n in nodes if n.creator is not None]

    @classmethod
    def from_loss(cls, loss: Tensor) -> "Graph":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        # iterative post-order: inputs before the node that consumes them
        while stack:
            node, expanded = stack.pop()
            if id(node) in visited:
                continue
            if expanded:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node.creator is not None:
                for parent in reversed(node.creator.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def leaves(self) -> list[Tensor]:
        return [node for node in self.nodes if node.is_leaf]


def backward(loss: Tensor) -> Graph:
    """Populate `.grad` on every requires_grad leaf reachable from a scalar loss."""
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise UsageError("backward() was already called on this loss; rebuild the graph first")
    if not loss.requires_grad:
        raise UsageError("Loss does not depend on any tensor that requires grad")

    graph = Graph.from_loss(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.creator is None:
            node.accumulate_grad(grad)
            continue
        input_grads = node.creator.backward(grad)
        for parent, parent_grad in zip(node.creator.inputs, input_grads, strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad

    loss._consumed = True
    for node in graph.nodes:
        node.creator = None
    return graph
