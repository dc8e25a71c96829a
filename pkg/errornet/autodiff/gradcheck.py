# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Central finite-difference checks for the analytic gradients."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from errornet.autodiff.tensor import Tensor, backward, precision


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_input: int
    passed: bool


def numerical_grad(
    fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int, step: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of the scalar `fn(*tensors)` with respect to `arrays[index]`."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    grad_flat = grad.reshape(-1)
    with precision(np.float64):
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = fn(*(Tensor(a) for a in base)).item()
            flat[i] = original - step
            minus = fn(*(Tensor(a) for a in base)).item()
            flat[i] = original
            grad_flat[i] = (plus - minus) / (2.0 * step)
    return grad


def gradcheck(
    fn: Callable[..., Tensor],
    arrays: Sequence[np.ndarray],
    rtol: float = 1e-3,
    atol: float = 1e-6,
    step: float = 1e-6,
) -> GradCheckResult:
    """
    Compare analytic and numerical gradients of a scalar-valued `fn` in 64-bit mode.

    The elementwise error is |analytic - numeric| / max(|analytic|, |numeric|, atol / rtol),
    so entries near zero are judged against the absolute floor.
    """
    with precision(np.float64):
        tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        backward(fn(*tensors))

    worst, worst_input = 0.0, -1
    for i, tensor in enumerate(tensors):
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = numerical_grad(fn, arrays, i, step)
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol / rtol)
        error = float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0
        if error > worst:
            worst, worst_input = error, i
    return GradCheckResult(max_rel_error=worst, worst_input=worst_input, passed=worst < rtol)
