# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Losses, checkpoints and run records; the training loops live in `errornet.training.trainer`."""

from errornet.training.checkpoint import (
    Checkpoint,
    CheckpointFormatError,
    load_checkpoint,
    load_stage_checkpoint,
    save_checkpoint,
)
from errornet.training.losses import (
    LossValue,
    err_pred_loss,
    err_target,
    joint_loss,
    kl_diag_gaussian,
    seg_loss,
    vae_loss,
)
from errornet.training.training_basics import (
    EpochRecord,
    Stage,
    StepRecord,
    TrainExecution,
    TrainState,
)

__all__ = [
    "Checkpoint",
    "CheckpointFormatError",
    "EpochRecord",
    "LossValue",
    "Stage",
    "StepRecord",
    "TrainExecution",
    "TrainState",
    "err_pred_loss",
    "err_target",
    "joint_loss",
    "kl_diag_gaussian",
    "load_checkpoint",
    "load_stage_checkpoint",
    "save_checkpoint",
    "seg_loss",
    "vae_loss",
]
