# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Test-time segmentation and additive error correction."""

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from errornet.autodiff.tensor import DimensionError, Tensor, no_grad
from errornet.networks import VAE, ErrorPredictor, LatentRNG, Network, NetworkSpec, SegUNet
from errornet.training.checkpoint import load_stage_checkpoint, spec_from_meta
from errornet.utils.errors import ConfigError

logger = logging.getLogger(__name__)

# variant -> checkpoint holding its predictor (None: no correction)
VARIANTS: dict[str, str | None] = {
    "base": None,
    "err_only": "err_novae",
    "stagewise": "err",
    "joint_nocorr": None,
    "joint": "joint",
}

# variant -> checkpoint holding its segmentation network
SEGMENTERS: dict[str, str] = {
    "base": "seg",
    "err_only": "seg",
    "stagewise": "seg",
    "joint_nocorr": "joint",
    "joint": "joint",
}

# err-pred / vae / joint columns of the ablation table
ABLATION_FLAGS: dict[str, tuple[bool, bool, bool]] = {
    "base": (False, False, False),
    "err_only": (True, False, False),
    "stagewise": (True, True, False),
    "joint_nocorr": (False, True, True),
    "joint": (True, True, True),
}


def uncorrected_variant(variant: str) -> str:
    """The variant scoring the same segmentation network without adding the error map."""
    if variant not in VARIANTS:
        raise ConfigError(f"Unknown variant {variant}; choose from {', '.join(VARIANTS)}")
    return "joint_nocorr" if SEGMENTERS[variant] == "joint" else "base"


@contextmanager
def evaluating(*networks: Network) -> Iterator[None]:
    """Put networks in eval mode and disable graph recording; restore modes afterwards."""
    modes = [net.training for net in networks]
    for net in networks:
        net.eval()
    try:
        with no_grad():
            yield
    finally:
        for net, mode in zip(networks, modes, strict=True):
            net.training = mode


def _as_batch(array: np.ndarray | Tensor, spec: NetworkSpec, what: str) -> tuple[Tensor, bool]:
    data = array.data if isinstance(array, Tensor) else np.asarray(array, dtype=np.float32)
    single = data.ndim == 3
    if single:
        data = data[None]
    if data.ndim != 4 or data.shape[-2:] != (spec.resolution, spec.resolution):
        raise DimensionError(
            f"{what} of shape {data.shape} does not match network resolution {spec.resolution}"
        )
    return Tensor(data), single


def segment(net: SegUNet, image: np.ndarray | Tensor) -> np.ndarray:
    """Probability map S in (0, 1), shaped like `image` (1 x H x W or N x 1 x H x W)."""
    x, single = _as_batch(image, net.spec, "image")
    with evaluating(net):
        s = net(x).data
    return s[0] if single else s


def predict_error(
    predictor: ErrorPredictor, image: np.ndarray | Tensor, s: np.ndarray | Tensor
) -> np.ndarray:
    x, single = _as_batch(image, predictor.spec, "image")
    seg, _ = _as_batch(s, predictor.spec, "segmentation")
    if seg.shape[0] != x.shape[0]:
        raise DimensionError(f"Batch sizes differ: image {x.shape}, segmentation {seg.shape}")
    with evaluating(predictor):
        e_hat = predictor(x, seg).data
    return e_hat[0] if single else e_hat


def apply_correction(s: np.ndarray, e_hat: np.ndarray) -> np.ndarray:
    if np.shape(s) != np.shape(e_hat):
        raise DimensionError(f"Segmentation {np.shape(s)} and error map {np.shape(e_hat)} differ")
    return np.clip(np.asarray(s) + np.asarray(e_hat), 0.0, 1.0).astype(np.float32)


def correct(
    predictor: ErrorPredictor, image: np.ndarray | Tensor, s: np.ndarray | Tensor
) -> np.ndarray:
    """S* = clamp(S + E_hat, 0, 1) with E_hat predicted from (image, S); no error injection."""
    s_data = s.data if isinstance(s, Tensor) else np.asarray(s)
    return apply_correction(s_data, predict_error(predictor, image, s_data))


@dataclass
class ErrorNetPipeline:
    """
    A segmentation network with an optional error predictor, as one evaluable variant.

    The VAE is only carried along for inspection; inference never samples from it.
    """

    variant: str
    seg: SegUNet
    predictor: ErrorPredictor | None = None
    vae: VAE | None = None

    @property
    def spec(self) -> NetworkSpec:
        return self.seg.spec

    @property
    def corrects(self) -> bool:
        return self.predictor is not None

    @property
    def ablation_flags(self) -> tuple[bool, bool, bool]:
        return ABLATION_FLAGS[self.variant]

    def segment(self, image: np.ndarray) -> np.ndarray:
        return segment(self.seg, image)

    def predict(self, image: np.ndarray, with_correction: bool = True) -> np.ndarray:
        """Final probability map: S, or S* when this variant corrects and correction is on."""
        s = self.segment(image)
        if with_correction and self.predictor is not None:
            return correct(self.predictor, image, s)
        return s

    @classmethod
    def from_checkpoints(cls, directory: str | Path, variant: str) -> "ErrorNetPipeline":
        """
        Load a variant from the per-stage checkpoints of one training run.

        `base` reads seg; `err_only` and `stagewise` add the predictor of err_novae / err;
        `joint` takes both networks from the joint checkpoint and `joint_nocorr` only its
        segmentation network.
        """
        if variant not in VARIANTS:
            raise ConfigError(f"Unknown variant {variant}; choose from {', '.join(VARIANTS)}")
        directory = Path(directory)
        source = VARIANTS[variant]
        seg_checkpoint = load_stage_checkpoint(directory, SEGMENTERS[variant])
        spec, err_depth = spec_from_meta(seg_checkpoint.meta)

        seg = SegUNet(spec)
        seg_checkpoint.restore_into({"seg": seg.store}, with_moments=False)
        predictor = None
        if source is not None:
            checkpoint = (
                seg_checkpoint if source == "joint" else load_stage_checkpoint(directory, source)
            )
            if spec_from_meta(checkpoint.meta) != (spec, err_depth):
                segmenter = SEGMENTERS[variant]
                raise ConfigError(
                    f"Checkpoints {source} and {segmenter} were trained at different specs"
                )
            predictor = ErrorPredictor(spec, depth=err_depth)
            checkpoint.restore_into({"err": predictor.store}, with_moments=False)
        vae = None
        if ABLATION_FLAGS[variant][1] and (directory / "vae.ckpt").is_file():
            vae = VAE(spec, rng=LatentRNG(0))
            load_stage_checkpoint(directory, "vae").restore_into({"vae": vae.store}, False)
            vae.eval()
        seg.eval()
        if predictor is not None:
            predictor.eval()
        logger.info("Loaded %s pipeline from %s", variant, directory)
        return cls(variant=variant, seg=seg, predictor=predictor, vae=vae)

    @classmethod
    def available_variants(cls, directory: str | Path) -> list[str]:
        """Variants whose checkpoints all exist in `directory`."""
        directory = Path(directory)
        found = []
        for variant, source in VARIANTS.items():
            needed = {SEGMENTERS[variant]} | ({source} if source else set())
            if all((directory / f"{name}.ckpt").is_file() for name in needed):
                found.append(variant)
        return found
