# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Named parameter collections and the Adam optimiser."""

import hashlib
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np

from errornet.autodiff.tensor import DimensionError, Tensor
from errornet.utils.errors import UsageError


@dataclass
class AdamState:
    """First and second moment buffers of one parameter."""

    m: np.ndarray
    v: np.ndarray


@dataclass
class ParamStore:
    """
    Ordered collection of named trainable tensors plus non-trainable buffers.

    A store is the unit of freezing and checkpointing: freezing clears `requires_grad` on every
    parameter so the backward pass skips them and `adam_step` leaves them untouched.
    """

    params: dict[str, Tensor] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    moments: dict[str, AdamState] = field(default_factory=dict)
    step: int = 0
    frozen: bool = False

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise UsageError(f"Parameter {name} is already registered")
        tensor = Tensor(data, requires_grad=not self.frozen, name=name)
        self.params[name] = tensor
        return tensor

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        if name in self.buffers:
            raise UsageError(f"Buffer {name} is already registered")
        self.buffers[name] = np.array(data, dtype=np.float32)
        return self.buffers[name]

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def freeze(self, names: Iterable[str] | None = None) -> None:
        """Freeze the named parameters, or the whole store when no names are given."""
        selected = list(self.params) if names is None else list(names)
        for name in selected:
            tensor = self.params[name]
            tensor.requires_grad = False
            tensor.grad = None
        self.frozen = all(not t.requires_grad for t in self.params.values())

    def unfreeze(self, names: Iterable[str] | None = None) -> None:
        selected = list(self.params) if names is None else list(names)
        for name in selected:
            self.params[name].requires_grad = True
        self.frozen = False

    def is_frozen(self, name: str) -> bool:
        return not self.params[name].requires_grad

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], buffers: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(arrays)) + sorted(set(self.buffers) - set(buffers))
        if missing:
            raise UsageError(f"Checkpoint is missing entries: {', '.join(missing)}")
        for name, tensor in self.params.items():
            if arrays[name].shape != tensor.shape:
                raise DimensionError(
                    f"Parameter {name} has shape {tensor.shape}, "
                    f"checkpoint has {arrays[name].shape}"
                )
            tensor.data = arrays[name].astype(tensor.dtype, copy=True)
        for name, buffer in self.buffers.items():
            buffer[...] = buffers[name]

    def digest(self) -> str:
        """SHA-256 over parameter and buffer bytes in registration order."""
        h = hashlib.sha256()
        for name, tensor in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(tensor.data).tobytes())
        for name, buffer in self.buffers.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(buffer).tobytes())
        return h.hexdigest()


def adam_step(
    store: ParamStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update to every unfrozen parameter, then zero the grads."""
    if store.frozen:
        return
    for name, tensor in store.params.items():
        if not store.is_frozen(name) and tensor.grad is None:
            raise UsageError(f"Parameter {name} has no gradient; call backward() first")

    store.step += 1
    correction1 = 1.0 - beta1**store.step
    correction2 = 1.0 - beta2**store.step
    for name, tensor in store.params.items():
        if store.is_frozen(name):
            continue
        grad = tensor.grad
        state = store.moments.get(name)
        if state is None:
            state = AdamState(np.zeros_like(tensor.data), np.zeros_like(tensor.data))
            store.moments[name] = state
        state.m *= beta1
        state.m += (1.0 - beta1) * grad
        state.v *= beta2
        state.v += (1.0 - beta2) * grad * grad
        m_hat = state.m / correction1
        v_hat = state.v / correction2
        tensor.data = (tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(tensor.dtype)
    store.zero_grad()
