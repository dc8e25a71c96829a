# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""U-Net family: the base segmentation network and the error predictor."""

from typing import Any, override

from errornet.autodiff import functional as F
from errornet.networks.base import Network, NetworkSpec, Runner
from errornet.networks.layers import Concat, ConvBlock, Layer, MaxPool, Shape, Upsample
from errornet.utils.errors import ConfigError


class UNet(Network):
    """
    Encoder-decoder with skip connections and `depth` pooling steps.

    Encoder level i (1-based) has 2**(i-1) times the base width; every decoder block upsamples
    by nearest neighbour, concatenates the matching encoder output and narrows back to that
    level's width. Row labels follow the deepest (4-pool) layout so that shallower variants keep
    the numbering of the decoder blocks they share with it.
    """

    norm: F.NormMode = "instance"
    act: F.ActivationKind = "leaky_relu"
    out_act: F.ActivationKind = "sigmoid"

    def __init__(self, spec: NetworkSpec, seed: int = 0, allocate: bool = True, depth: int = 4):
        if depth < 1 or depth > 4:
            raise ConfigError(f"U-Net depth must be between 1 and 4, got {depth}")
        self.depth = depth
        self.pools = depth
        super().__init__(spec, seed=seed, allocate=allocate)

    def in_channels(self) -> int:
        return 1

    def conv(self, label: str, cin: int, cout: int) -> Layer:
        return self.add_layer(
            ConvBlock(self, f"Conv layer - {label}", f"conv{label}", cin, cout, self.norm, self.act)
        )

    @override
    def build(self) -> None:
        d = self.depth
        cin = self.in_channels()
        for level in range(1, d + 2):
            width = self.spec.channels(2 ** (level - 1))
            self.conv(f"{level}a", cin, width)
            self.conv(f"{level}b", width, width)
            if level <= d:
                self.add_layer(MaxPool(self, f"Max pool - {level}", f"pool{level}"))
            cin = width

        offset = 4 - d
        for j in range(1, d + 1):
            step = j + offset
            width = self.spec.channels(2 ** (d - j))
            self.add_layer(Upsample(self, f"Upsample - {step}", f"up{step}"))
            self.add_layer(Concat(self, f"Concat - {step}", f"cat{step}"))
            self.conv(f"{5 + step}a", cin + width, width)
            self.conv(f"{5 + step}b", width, width)
            cin = width

        self.add_layer(
            ConvBlock(
                self, "Output layer", "output", cin, self.spec.num_classes, None, self.out_act
            )
        )

    def backbone(self, run: Runner, x: Any) -> Any:
        d = self.depth
        skips = []
        for level in range(1, d + 2):
            x = run(f"conv{level}b", run(f"conv{level}a", x))
            if level <= d:
                skips.append(x)
                x = run(f"pool{level}", x)
        for j in range(1, d + 1):
            step = j + 4 - d
            x = run(f"cat{step}", run(f"up{step}", x), skips.pop())
            x = run(f"conv{5 + step}b", run(f"conv{5 + step}a", x))
        return run("output", x)

    @override
    def wire(self, run: Runner, *inputs: Any) -> Any:
        return self.backbone(run, inputs[0])

    @override
    def input_shapes(self) -> tuple[Shape, ...]:
        r = self.spec.resolution
        return ((self.in_channels(), r, r),)


class SegUNet(UNet):
    """Base segmentation network: image in, foreground probability S in (0, 1) out."""

    @override
    def get_name(self) -> str:
        return "seg"


class ErrorPredictor(UNet):
    """
    Shallow U-Net mapping (image, segmentation) to a signed error map in [-1, 1].

    The two inputs are stacked as channels by a leading concat layer; batch norm and ReLU are
    used throughout and the output layer applies tanh.
    """

    norm = "batch"
    act = "relu"
    out_act = "tanh"

    def __init__(self, spec: NetworkSpec, seed: int = 0, allocate: bool = True, depth: int = 3):
        super().__init__(spec, seed=seed, allocate=allocate, depth=depth)

    @override
    def get_name(self) -> str:
        return "err"

    @override
    def in_channels(self) -> int:
        return 1 + self.spec.num_classes

    @override
    def build(self) -> None:
        self.add_layer(Concat(self, "Concat - input", "input"))
        super().build()

    @override
    def wire(self, run: Runner, *inputs: Any) -> Any:
        image, segmentation = inputs
        return self.backbone(run, run("input", image, segmentation))

    @override
    def input_shapes(self) -> tuple[Shape, ...]:
        r = self.spec.resolution
        return ((1, r, r), (self.spec.num_classes, r, r))

    def zero_output(self) -> None:
        """Zero the output layer so that the predicted error map is identically 0."""
        output = self.layers["output"]
        assert isinstance(output, ConvBlock)
        output.zero_()
