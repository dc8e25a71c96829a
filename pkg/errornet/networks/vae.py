# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Variational autoencoder over segmentation masks, used to inject plausible errors."""

from dataclasses import dataclass
from typing import Any, Literal, override

import numpy as np

from errornet.autodiff import functional as F
from errornet.autodiff.tensor import DimensionError, Tensor
from errornet.networks.base import Network, NetworkSpec, Runner
from errornet.networks.layers import (
    ActivationLayer,
    ConvBlock,
    ConvTransposeBlock,
    DenseHead,
    Layer,
    MaxPool,
    Shape,
    ToMap,
    Upsample,
)
from errornet.utils.errors import UsageError

SampleMode = Literal["train", "inject", "mean"]

INJECT_VARIANCE = 1e-4


class LatentRNG:
    """Seeded Gaussian source for latent sampling that counts its draws."""

    def __init__(self, seed: int | None):
        if seed is None:
            raise UsageError("Latent sampling needs a seeded generator")
        self.seed = seed
        self._generator = np.random.default_rng(seed)
        self.draws = 0

    def normal(self, shape: tuple[int, ...], scale: float = 1.0) -> np.ndarray:
        self.draws += 1
        return self._generator.normal(0.0, scale, size=shape)

    def get_state(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "draws": self.draws,
            "bit_generator": self._generator.bit_generator.state,
        }

    def set_state(self, state: dict[str, Any]) -> None:
        self.seed = int(state["seed"])
        self.draws = int(state["draws"])
        self._generator.bit_generator.state = state["bit_generator"]


def sample_latent(
    mu: Tensor,
    log_var: Tensor,
    mode: SampleMode,
    rng: LatentRNG | None,
    noise: np.ndarray | None = None,
    variance: float = INJECT_VARIANCE,
) -> Tensor:
    """
    Draw a latent code.

    `train` uses the reparameterisation z = mu + exp(log_var / 2) * eps with eps ~ N(0, 1),
    `inject` perturbs the posterior mean with N(0, variance) noise and ignores log_var,
    `mean` returns mu unchanged. An explicit `noise` array replaces the random draw.
    """
    if mu.shape != log_var.shape:
        raise DimensionError(f"mu {mu.shape} and log_var {log_var.shape} differ in shape")
    if mode == "mean":
        return mu
    if noise is None:
        if rng is None:
            raise UsageError(f"Latent sampling in {mode} mode needs a seeded LatentRNG")
        scale = 1.0 if mode == "train" else float(np.sqrt(variance))
        noise = rng.normal(mu.shape, scale)
    eps = F.as_tensor(np.asarray(noise, dtype=mu.dtype), like=mu)
    if mode == "train":
        return F.add(mu, F.mul(F.exp(F.mul(log_var, 0.5)), eps))
    if mode == "inject":
        return F.add(mu, eps)
    raise UsageError(f"Unknown sampling mode: {mode}")


class LatentSampling(Layer):
    """Combines the two dense heads into a latent code using the owner's current mode."""

    owner: "VAE"

    @override
    def __call__(self, *inputs: Tensor) -> Tensor:
        mu, log_var = inputs
        return sample_latent(
            mu,
            log_var,
            self.owner.sample_mode,
            self.owner.rng,
            noise=self.owner.noise,
            variance=self.owner.inject_variance,
        )

    @override
    def output_shape(self, *shapes: Shape) -> Shape:
        a, b = shapes
        if a != b:
            raise DimensionError(f"{self.name} needs equal head shapes, got {a} and {b}")
        return a


@dataclass
class VAEOutput:
    s_hat: Tensor
    mu: Tensor
    log_var: Tensor


class VAE(Network):
    """
    Three-pool convolutional VAE with a square single-channel latent map.

    The encoder ends in two dense heads producing mu and log sigma^2 over (resolution / 8)^2
    units. The decoder doubles twice with transposed convolutions and once with nearest
    upsampling before a k-channel sigmoid output.
    """

    pools = 3

    def __init__(
        self,
        spec: NetworkSpec,
        seed: int = 0,
        allocate: bool = True,
        rng: LatentRNG | None = None,
        inject_variance: float = INJECT_VARIANCE,
    ):
        self.rng = rng
        self.inject_variance = inject_variance
        self.sample_mode: SampleMode = "train"
        self.noise: np.ndarray | None = None
        super().__init__(spec, seed=seed, allocate=allocate)

    @override
    def get_name(self) -> str:
        return "vae"

    def conv(self, label: str, cin: int, cout: int, title: str = "Conv layer") -> None:
        block = ConvBlock(self, f"{title} - {label}", f"conv{label}", cin, cout, "batch", "relu")
        self.add_layer(block)

    @override
    def build(self) -> None:
        spec = self.spec
        cin = spec.num_classes
        for level in range(1, 4):
            width = spec.channels(2 ** (level - 1))
            self.conv(f"{level}a", cin, width)
            self.conv(f"{level}b", width, width)
            self.add_layer(MaxPool(self, f"Max pool - {level}", f"pool{level}"))
            cin = width
        self.conv("4a", cin, spec.channels(16), title="encoder conv")
        self.conv("4b", spec.channels(16), 1, title="encoder conv")

        d = spec.latent_dim
        self.add_layer(DenseHead(self, "encoder dense - mu", "mu", d, d))
        self.add_layer(DenseHead(self, "encoder dense - sigma", "log_var", d, d))
        self.add_layer(LatentSampling(self, "sampling - 1", "sampling"))
        self.add_layer(ToMap(self, "reshape - 1", "reshape", spec.latent_side))

        wide, narrow = spec.channels(2), spec.channels(1)
        self.add_layer(
            ConvTransposeBlock(self, "Conv transpose - 1", "convT1", 1, wide, "batch", "relu")
        )
        self.conv("5a", wide, wide)
        self.conv("5b", wide, wide)
        self.add_layer(
            ConvTransposeBlock(self, "Conv transpose - 2", "convT2", wide, narrow, "batch", "relu")
        )
        self.conv("6a", narrow, narrow)
        self.conv("6b", narrow, narrow)
        self.add_layer(Upsample(self, "Upsample - 3", "up3"))
        self.conv("7a", narrow, narrow)
        self.conv("7b", narrow, narrow)
        self.add_layer(
            ConvBlock(self, "Output layer", "output", narrow, spec.num_classes, None, None)
        )
        self.add_layer(ActivationLayer(self, "Sigmoid layer", "sigmoid", "sigmoid"))

    def encode_with(self, run: Runner, s: Any) -> tuple[Any, Any]:
        x = s
        for level in range(1, 4):
            x = run(f"pool{level}", run(f"conv{level}b", run(f"conv{level}a", x)))
        x = run("conv4b", run("conv4a", x))
        return run("mu", x), run("log_var", x)

    def decode_with(self, run: Runner, z: Any) -> Any:
        x = run("convT1", run("reshape", z))
        x = run("conv5b", run("conv5a", x))
        x = run("convT2", x)
        x = run("conv6b", run("conv6a", x))
        x = run("up3", x)
        x = run("conv7b", run("conv7a", x))
        return run("sigmoid", run("output", x))

    @override
    def wire(self, run: Runner, *inputs: Any) -> Any:
        mu, log_var = self.encode_with(run, inputs[0])
        s_hat = self.decode_with(run, run("sampling", mu, log_var))
        return s_hat, mu, log_var

    @override
    def input_shapes(self) -> tuple[Shape, ...]:
        r = self.spec.resolution
        return ((self.spec.num_classes, r, r),)

    def reconstruct(
        self, s: Tensor, mode: SampleMode = "train", noise: np.ndarray | None = None
    ) -> VAEOutput:
        """Encode `s`, draw a latent code in the given mode and decode it."""
        self.sample_mode, self.noise = mode, noise
        try:
            s_hat, mu, log_var = self.forward(s)
        finally:
            self.sample_mode, self.noise = "train", None
        return VAEOutput(s_hat=s_hat, mu=mu, log_var=log_var)

    def inject(self, s: Tensor) -> Tensor:
        """Degrade a segmentation by decoding a narrow perturbation of its posterior mean."""
        return self.reconstruct(s, mode="inject").s_hat

    def encode(self, s: Tensor) -> tuple[Tensor, Tensor]:
        return self.encode_with(lambda key, *values: self.layers[key](*values), s)

    def decode(self, z: Tensor) -> Tensor:
        return self.decode_with(lambda key, *values: self.layers[key](*values), z)
