# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Stage",
    "TrainState",
    "StepRecord",
    "EpochRecord",
    "TrainExecution",
    "stage_seed",
]


class Stage(Enum):
    """Training stages in the order they must run."""

    SEG = "seg"
    VAE = "vae"
    ERR = "err"
    JOINT = "joint"

    @property
    def index(self) -> int:
        return list(Stage).index(self)


class TrainState(Enum):
    """Defines possible states during a training run's lifecycle."""

    IDLE = "idle"
    RUNNING = "running"
    COMPLETED = "completed"
    EARLY_STOPPED = "early_stopped"
    ERROR = "error"


def stage_seed(seed: int, stage: Stage) -> int:
    """Seed of a stage's latent sampling stream, derived from the run seed."""
    return int(np.random.SeedSequence([seed, stage.index]).generate_state(1)[0])


@dataclass
class StepRecord:
    """Loss values of one optimiser step."""

    step: int
    stage: str
    loss: float
    components: dict[str, float] = field(default_factory=dict)

    def __repr__(self) -> str:
        return f"<StepRecord #{self.step} stage={self.stage} loss={self.loss:.6g}>"


@dataclass
class EpochRecord:
    """
    Summary of one epoch: mean training losses and the validation metric.

    `improved` marks epochs whose weights became the retained best checkpoint.
    """

    epoch: int
    step: int
    loss: float
    components: dict[str, float]
    val_metric: float
    improved: bool = False
    duration: float = 0.0

    def __repr__(self) -> str:
        return (
            f"<EpochRecord #{self.epoch} step={self.step} loss={self.loss:.6g} "
            f"val={self.val_metric:.6g}{' *' if self.improved else ''}>"
        )


@dataclass
class TrainExecution:
    """
    Encapsulates one stage run.

    Contains every step and epoch record produced in this process (a resumed run starts
    from the resumed step), the best validation result, and the frozen-store digests.
    """

    stage: Stage
    checkpoint_name: str
    metric_name: str = "dice"
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    best_metric: float | None = None
    best_epoch: int | None = None
    checkpoint_path: Path | None = None
    frozen_digests: dict[str, str] = field(default_factory=dict)
    success: bool = False
    error: str | None = None
    execution_time: float = 0.0
    state: TrainState = TrainState.IDLE

    def __repr__(self) -> str:
        return (
            f"<TrainExecution stage={self.stage.value} epochs={len(self.epochs)} "
            f"best={self.best_metric} success={self.success}>"
        )
