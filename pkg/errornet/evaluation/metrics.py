# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Overlap metrics on binary masks, restricted to the field of view."""

import numpy as np
from scipy import ndimage

from errornet.autodiff.tensor import DimensionError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _restrict(
    a: np.ndarray, b: np.ndarray, fov: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a) > 0, np.asarray(b) > 0
    if a.shape != b.shape:
        raise DimensionError(f"Masks have shapes {a.shape} and {b.shape}")
    if fov is not None:
        inside = np.broadcast_to(np.asarray(fov) > 0, a.shape)
        a, b = a & inside, b & inside
    return a, b


def dice(a: np.ndarray, b: np.ndarray, fov: np.ndarray | None = None) -> float:
    """2|a & b| / (|a| + |b|); 1.0 when both masks are empty."""
    a, b = _restrict(a, b, fov)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def iou(a: np.ndarray, b: np.ndarray, fov: np.ndarray | None = None) -> float:
    """|a & b| / |a | b|; 1.0 when both masks are empty."""
    a, b = _restrict(a, b, fov)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def dice_from_iou(j: float) -> float:
    return 2.0 * j / (1.0 + j)


def iou_from_dice(d: float) -> float:
    return d / (2.0 - d)


def count_components(mask: np.ndarray) -> int:
    """Foreground connected components of a 2-D mask (8-connectivity)."""
    plane = np.asarray(mask).squeeze()
    if plane.ndim != 2:
        raise DimensionError(f"count_components needs a 2-D mask, got shape {np.shape(mask)}")
    _, count = ndimage.label(plane > 0, structure=EIGHT_CONNECTED)
    return int(count)
