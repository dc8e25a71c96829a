# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Inference-time correction, overlap metrics and cross-domain evaluation grids."""

from errornet.evaluation.inference import (
    ABLATION_FLAGS,
    SEGMENTERS,
    VARIANTS,
    ErrorNetPipeline,
    apply_correction,
    correct,
    evaluating,
    predict_error,
    segment,
    uncorrected_variant,
)
from errornet.evaluation.matrix import (
    MetricsMatrix,
    evaluate_matrix,
    load_pipelines,
    write_reports,
)
from errornet.evaluation.metrics import (
    count_components,
    dice,
    dice_from_iou,
    iou,
    iou_from_dice,
)

__all__ = [
    "ABLATION_FLAGS",
    "SEGMENTERS",
    "VARIANTS",
    "ErrorNetPipeline",
    "MetricsMatrix",
    "apply_correction",
    "correct",
    "count_components",
    "dice",
    "dice_from_iou",
    "evaluate_matrix",
    "evaluating",
    "iou",
    "iou_from_dice",
    "load_pipelines",
    "predict_error",
    "segment",
    "uncorrected_variant",
    "write_reports",
]
