# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""The three ErrorNet networks and their registry."""

from errornet.networks.base import LayerTrace, Network, NetworkSpec
from errornet.networks.layers import Layer, Shape
from errornet.networks.unet import ErrorPredictor, SegUNet, UNet
from errornet.networks.vae import (
    INJECT_VARIANCE,
    VAE,
    LatentRNG,
    SampleMode,
    VAEOutput,
    sample_latent,
)

networks_registry: dict[str, type[Network]] = {
    "seg": SegUNet,
    "vae": VAE,
    "err": ErrorPredictor,
}


def build_seg_unet(spec: NetworkSpec, seed: int = 0) -> SegUNet:
    return SegUNet(spec, seed=seed)


def build_vae(spec: NetworkSpec, seed: int = 0, rng: LatentRNG | None = None) -> VAE:
    return VAE(spec, seed=seed, rng=rng)


def build_err_predictor(spec: NetworkSpec, seed: int = 0, depth: int = 3) -> ErrorPredictor:
    return ErrorPredictor(spec, seed=seed, depth=depth)


__all__ = [
    "INJECT_VARIANCE",
    "VAE",
    "ErrorPredictor",
    "Layer",
    "LayerTrace",
    "LatentRNG",
    "Network",
    "NetworkSpec",
    "SampleMode",
    "SegUNet",
    "Shape",
    "UNet",
    "VAEOutput",
    "build_err_predictor",
    "build_seg_unet",
    "build_vae",
    "networks_registry",
    "sample_latent",
]
