# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Network specification and the abstract network every model derives from."""

from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property
from typing import Any, NamedTuple

import numpy as np

from errornet.autodiff.params import ParamStore
from errornet.autodiff.tensor import DimensionError, Tensor
from errornet.networks.layers import Layer, Shape
from errornet.utils.errors import ConfigError


@dataclass(frozen=True)
class NetworkSpec:
    """Size knobs shared by the three networks. The canonical setting is 640 px and width 32."""

    resolution: int = 64
    base_width: int = 4
    width_scale: float = 1.0
    num_classes: int = 1

    @property
    def latent_side(self) -> int:
        return self.resolution // 8

    @property
    def latent_dim(self) -> int:
        return self.latent_side**2

    def channels(self, multiplier: int) -> int:
        return max(1, round(self.base_width * self.width_scale * multiplier))

    def validate(self, pools: int) -> None:
        if self.base_width < 1 or self.width_scale <= 0:
            raise ConfigError(
                f"base_width must be >= 1 and width_scale > 0, "
                f"got {self.base_width} and {self.width_scale}"
            )
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        divisor = 2**pools
        if self.resolution < divisor or self.resolution % divisor:
            raise ConfigError(
                f"resolution {self.resolution} must be a positive multiple of {divisor} "
                f"for a network with {pools} pooling steps"
            )


class LayerTrace(NamedTuple):
    name: str
    inputs: tuple[Shape, ...]
    output: Shape


# A runner applies a layer to values: tensors in a real forward pass, shapes in a trace.
Runner = Callable[..., Any]


class Network(ABC):
    """
    A model built from named layers whose weights live in one ParamStore.

    Subclasses declare their layers in `build()` and wire them once in `wire()`. The same
    wiring serves `forward` (layers applied to tensors) and `trace_shapes` (layers asked for
    their output shapes), so a shape trace always describes the network that actually runs.
    """

    pools: int = 0

    def __init__(self, spec: NetworkSpec, seed: int = 0, allocate: bool = True):
        spec.validate(self.pools)
        self.spec = spec
        self.seed = seed
        self.allocated = allocate
        self.training = True
        self.store = ParamStore()
        self.layers: dict[str, Layer] = {}
        self._init_rng = np.random.default_rng(seed)
        self.build()

    @classmethod
    def shape_only(cls, spec: NetworkSpec, **kwargs: Any) -> "Network":
        """Build without allocating weights, for tracing or counting at large specs."""
        return cls(spec, allocate=False, **kwargs)

    @cached_property
    def name(self) -> str:
        return self.get_name()

    @abstractmethod
    def get_name(self) -> str:
        pass

    @abstractmethod
    def build(self) -> None:
        """Register the network's layers through `add_layer`."""
        pass

    @abstractmethod
    def wire(self, run: Runner, *inputs: Any) -> Any:
        """Connect the layers; `run(layer_key, *values)` applies one layer."""
        pass

    @abstractmethod
    def input_shapes(self) -> tuple[Shape, ...]:
        """Per-sample input shapes (without the batch axis)."""
        pass

    def add_layer(self, layer: Layer) -> Layer:
        self.layers[layer.key] = layer
        return layer

    def he_normal(self, fan_in: int) -> Callable[[Shape], np.ndarray]:
        std = float(np.sqrt(2.0 / fan_in))

        def init(shape: Shape) -> np.ndarray:
            return self._init_rng.normal(0.0, std, size=shape)

        return init

    def forward(self, *inputs: Tensor) -> Any:
        expected = self.input_shapes()
        if len(inputs) != len(expected):
            raise DimensionError(f"{self.name} takes {len(expected)} inputs, got {len(inputs)}")
        for tensor, shape in zip(inputs, expected, strict=True):
            if tensor.ndim != 4 or tensor.shape[1:] != shape:
                raise DimensionError(
                    f"{self.name} expects inputs of shape N x {' x '.join(map(str, shape))}, "
                    f"got {tensor.shape}"
                )
        return self.wire(lambda key, *values: self.layers[key](*values), *inputs)

    __call__ = forward

    def trace_shapes(self, *input_shapes: Shape) -> list[LayerTrace]:
        """Per-layer (name, input shapes, output shape) rows for the given per-sample inputs."""
        rows: list[LayerTrace] = []

        def run(key: str, *shapes: Shape) -> Shape:
            layer = self.layers[key]
            out = layer.output_shape(*shapes)
            rows.append(LayerTrace(layer.name, tuple(shapes), out))
            return out

        self.wire(run, *(input_shapes or self.input_shapes()))
        return rows

    def output_shape(self) -> Shape:
        return self.trace_shapes()[-1].output

    def train(self) -> "Network":
        self.training = True
        return self

    def eval(self) -> "Network":
        self.training = False
        return self

    def freeze(self) -> None:
        self.store.freeze()

    def unfreeze(self) -> None:
        self.store.unfreeze()

    @property
    def frozen(self) -> bool:
        return self.store.frozen

    def num_parameters(self) -> int:
        return sum(layer.num_parameters() for layer in self.layers.values())
