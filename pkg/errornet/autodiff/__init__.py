# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Minimal reverse-mode automatic differentiation engine."""

from errornet.autodiff.gradcheck import GradCheckResult, gradcheck, numerical_grad
from errornet.autodiff.params import AdamState, ParamStore, adam_step
from errornet.autodiff.tensor import (
    DimensionError,
    Function,
    Graph,
    Tensor,
    backward,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
)

__all__ = [
    "AdamState",
    "DimensionError",
    "Function",
    "GradCheckResult",
    "Graph",
    "ParamStore",
    "Tensor",
    "adam_step",
    "backward",
    "get_default_dtype",
    "gradcheck",
    "is_grad_enabled",
    "no_grad",
    "numerical_grad",
    "precision",
]
