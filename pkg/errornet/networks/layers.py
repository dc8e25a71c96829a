# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Layer building blocks shared by the three networks."""

from abc import ABC, abstractmethod
from collections.abc import Callable
from typing import TYPE_CHECKING, override

import numpy as np

from errornet.autodiff import functional as F
from errornet.autodiff.tensor import DimensionError, Tensor
from errornet.utils.errors import UsageError

if TYPE_CHECKING:
    from errornet.networks.base import Network

Shape = tuple[int, ...]


class Layer(ABC):
    """
    One named row of a network's layer table.

    `name` is the human-readable row label used in shape traces, `key` prefixes the layer's
    entries in the owning network's ParamStore. Parameter shapes are declared up front so that
    parameter counts and shape traces never need allocated weights.
    """

    def __init__(self, owner: "Network", name: str, key: str):
        self.owner = owner
        self.name = name
        self.key = key
        self.param_shapes: dict[str, Shape] = {}
        self.params: dict[str, Tensor] = {}

    def declare(self, name: str, shape: Shape, init: Callable[[Shape], np.ndarray]) -> None:
        self.param_shapes[name] = shape
        if self.owner.allocated:
            self.params[name] = self.owner.store.add(f"{self.key}.{name}", init(shape))

    def num_parameters(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.param_shapes.values())

    def require_allocated(self) -> None:
        if not self.owner.allocated:
            raise UsageError(f"{self.owner.get_name()} was built shape-only and cannot run")

    @abstractmethod
    def __call__(self, *inputs: Tensor) -> Tensor:
        pass

    @abstractmethod
    def output_shape(self, *shapes: Shape) -> Shape:
        pass


class ConvBlock(Layer):
    """3x3 convolution, optionally followed by normalisation and an activation."""

    def __init__(
        self,
        owner: "Network",
        name: str,
        key: str,
        in_channels: int,
        out_channels: int,
        norm: F.NormMode | None,
        act: F.ActivationKind | None,
    ):
        super().__init__(owner, name, key)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.norm = norm
        self.act = act
        self.running_mean: np.ndarray | None = None
        self.running_var: np.ndarray | None = None
        self.declare("weight", self.weight_shape(), owner.he_normal(in_channels * 9))
        self.declare("bias", (out_channels,), np.zeros)
        if norm is not None:
            self.declare("gamma", (out_channels,), np.ones)
            self.declare("beta", (out_channels,), np.zeros)
            if norm == "batch" and owner.allocated:
                store = owner.store
                self.running_mean = store.add_buffer(f"{key}.running_mean", np.zeros(out_channels))
                self.running_var = store.add_buffer(f"{key}.running_var", np.ones(out_channels))

    def weight_shape(self) -> Shape:
        return (self.out_channels, self.in_channels, 3, 3)

    def convolve(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.params["weight"], self.params["bias"])

    def zero_(self) -> None:
        for tensor in self.params.values():
            tensor.data[...] = 0.0

    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        self.require_allocated()
        (x,) = inputs
        out = self.convolve(x)
        if self.norm is not None:
            out = F.normalize(
                out,
                self.params["gamma"],
                self.params["beta"],
                self.norm,
                training=self.owner.training,
                running_mean=self.running_mean,
                running_var=self.running_var,
            )
        if self.act is not None:
            out = F.activation(out, self.act)
        return out

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        (shape,) = shapes
        if shape[0] != self.in_channels:
            raise DimensionError(f"{self.name} expects {self.in_channels} channels, got {shape}")
        return (self.out_channels, shape[1], shape[2])


class ConvTransposeBlock(ConvBlock):
    """Stride-2 3x3 transposed convolution that doubles the spatial size."""

    @override
    def weight_shape(self) -> Shape:
        return (self.in_channels, self.out_channels, 3, 3)

    @override
    def convolve(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(x, self.params["weight"], self.params["bias"])

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        channels, h, w = super().output_shape(*shapes)
        return (channels, 2 * h, 2 * w)


class MaxPool(Layer):
    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        return F.maxpool2d(inputs[0])

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        c, h, w = shapes[0]
        if h % 2 or w % 2:
            raise DimensionError(f"{self.name} needs even spatial dimensions, got {h} x {w}")
        return (c, h // 2, w // 2)


class Upsample(Layer):
    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        return F.upsample_nearest(inputs[0])

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        c, h, w = shapes[0]
        return (c, 2 * h, 2 * w)


class Concat(Layer):
    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        return F.concat_channels(inputs[0], inputs[1])

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        a, b = shapes
        if a[1:] != b[1:]:
            raise DimensionError(f"{self.name} cannot join {a} and {b}")
        return (a[0] + b[0], a[1], a[2])


class DenseHead(Layer):
    """Flattens a feature map and applies an affine map to `features` outputs."""

    def __init__(self, owner: "Network", name: str, key: str, in_features: int, features: int):
        super().__init__(owner, name, key)
        self.in_features = in_features
        self.features = features
        self.declare("weight", (in_features, features), owner.he_normal(in_features))
        self.declare("bias", (features,), np.zeros)

    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        self.require_allocated()
        return F.dense(F.flatten(inputs[0]), self.params["weight"], self.params["bias"])

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        if int(np.prod(shapes[0])) != self.in_features:
            raise DimensionError(f"{self.name} expects {self.in_features} inputs, got {shapes[0]}")
        return (self.features,)


class ToMap(Layer):
    """Reshapes a latent vector back to a single-channel square map."""

    def __init__(self, owner: "Network", name: str, key: str, side: int):
        super().__init__(owner, name, key)
        self.side = side

    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        x = inputs[0]
        return F.reshape(x, (x.shape[0], 1, self.side, self.side))

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        if int(np.prod(shapes[0])) != self.side**2:
            raise DimensionError(f"{self.name} cannot fold {shapes[0]} to side {self.side}")
        return (1, self.side, self.side)


class ActivationLayer(Layer):
    def __init__(self, owner: "Network", name: str, key: str, kind: F.ActivationKind):
        super().__init__(owner, name, key)
        self.kind = kind

    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        return F.activation(inputs[0], self.kind)

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        return shapes[0]
