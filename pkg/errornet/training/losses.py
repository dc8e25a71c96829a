# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Training objectives for the three networks."""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from errornet.autodiff import functional as F
from errornet.autodiff.tensor import DimensionError, Tensor
from errornet.utils.errors import NumericalError, UsageError

SegLossKind = Literal["bce", "mse"]
TargetMode = Literal["signed", "squared"]

PROB_CLAMP = 1e-7


@dataclass
class LossValue:
    """A differentiable total plus named float components for logging."""

    total: Tensor
    components: dict[str, float] = field(default_factory=dict)

    @property
    def scalar(self) -> float:
        return self.total.item()

    def __post_init__(self):
        if not np.isfinite(self.total.data).all():
            raise NumericalError(f"Loss is not finite: {self.components}")


def _check_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _fov_weights(fov: np.ndarray | Tensor | None, shape: tuple[int, ...]) -> np.ndarray:
    if fov is None:
        return np.full(shape, 1.0 / int(np.prod(shape)))
    mask = np.broadcast_to(fov.data if isinstance(fov, Tensor) else np.asarray(fov), shape)
    count = float(np.count_nonzero(mask))
    if count == 0:
        raise UsageError("Loss mask (field of view) is empty")
    return (mask > 0).astype(np.float64) / count


def seg_loss(
    s: Tensor,
    g: Tensor | np.ndarray,
    fov: Tensor | np.ndarray | None = None,
    kind: SegLossKind = "bce",
) -> LossValue:
    """
    Segmentation loss averaged over field-of-view pixels.

    `bce` is binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7];
    `mse` is the squared error against the ground truth.
    """
    g_data = g.data if isinstance(g, Tensor) else np.asarray(g)
    if s.shape != g_data.shape:
        raise DimensionError(f"seg_loss: shapes {s.shape} and {g_data.shape} differ")
    weights = _fov_weights(fov, s.shape)
    if kind == "bce":
        p = F.clamp(s, PROB_CLAMP, 1.0 - PROB_CLAMP)
        per_pixel = F.add(
            F.mul(F.log(p), g_data),
            F.mul(F.log(F.sub(F.as_tensor(1.0, like=p), p)), 1.0 - g_data),
        )
        total = F.mul(F.sum_all(F.mul(per_pixel, weights)), -1.0)
    elif kind == "mse":
        diff = F.sub(s, F.as_tensor(g_data, like=s))
        total = F.sum_all(F.mul(F.mul(diff, diff), weights))
    else:
        raise UsageError(f"Unknown segmentation loss: {kind}")
    return LossValue(total, {"seg": total.item()})


def kl_diag_gaussian(mu: Tensor, log_var: Tensor) -> LossValue:
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over latent units, averaged over the batch."""
    _check_same_shape(mu, log_var, "kl_diag_gaussian")
    terms = F.sub(F.add(F.mul(mu, mu), F.exp(log_var)), F.add(log_var, 1.0))
    total = F.mul(F.sum_all(terms), 0.5 / mu.shape[0])
    return LossValue(total, {"kl": total.item()})


def vae_loss(
    s_hat: Tensor, s: Tensor, mu: Tensor, log_var: Tensor, kl_weight: float = 1.0
) -> LossValue:
    """Mean squared reconstruction error plus weighted KL divergence."""
    _check_same_shape(s_hat, s, "vae_loss")
    diff = F.sub(s_hat, s.detach())
    recon = F.mean_all(F.mul(diff, diff))
    kl = kl_diag_gaussian(mu, log_var).total
    weighted_kl = F.mul(kl, kl_weight)
    total = F.add(recon, weighted_kl)
    return LossValue(total, {"recon": recon.item(), "kl": weighted_kl.item()})


def err_target(
    s_hat: Tensor | np.ndarray, g: Tensor | np.ndarray, mode: TargetMode = "signed"
) -> Tensor:
    """
    Error map the predictor learns to output.

    `signed` is clamp(G - S_hat, -1, 1), so adding it to S_hat recovers G;
    `squared` is (S_hat - G)^2 and is never negative.
    """
    s_data = s_hat.data if isinstance(s_hat, Tensor) else np.asarray(s_hat)
    g_data = g.data if isinstance(g, Tensor) else np.asarray(g)
    if s_data.shape != g_data.shape:
        raise DimensionError(f"err_target: shapes {s_data.shape} and {g_data.shape} differ")
    if mode == "signed":
        target = np.clip(g_data - s_data, -1.0, 1.0)
    elif mode == "squared":
        target = (s_data - g_data) ** 2
    else:
        raise UsageError(f"Unknown error target mode: {mode}")
    return Tensor(target.astype(s_data.dtype), _keep_dtype=True)


def err_pred_loss(e_hat: Tensor, e: Tensor) -> LossValue:
    """Mean squared error between predicted and target error maps."""
    _check_same_shape(e_hat, e, "err_pred_loss")
    diff = F.sub(e_hat, e)
    total = F.mean_all(F.mul(diff, diff))
    return LossValue(total, {"pred": total.item()})


def joint_loss(
    pred: LossValue, seg: LossValue, pred_weight: float = 1.0, seg_weight: float = 1.0
) -> LossValue:
    total = F.add(F.mul(pred.total, pred_weight), F.mul(seg.total, seg_weight))
    return LossValue(total, {"pred": pred.scalar * pred_weight, "seg": seg.scalar * seg_weight})
