# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""ErrorNet - segmentation error correction with a learned shape prior."""

__version__ = "0.1.0"

from errornet.evaluation import ErrorNetPipeline, MetricsMatrix, evaluate_matrix
from errornet.networks import VAE, ErrorPredictor, NetworkSpec, SegUNet
from errornet.training.trainer import StageTrainer, train_joint, train_stage
from errornet.utils.config import RunConfig

__all__ = [
    "VAE",
    "ErrorNetPipeline",
    "ErrorPredictor",
    "MetricsMatrix",
    "NetworkSpec",
    "RunConfig",
    "SegUNet",
    "StageTrainer",
    "evaluate_matrix",
    "train_joint",
    "train_stage",
]
