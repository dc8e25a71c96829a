# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Per-step loss log (CSV) and run summary (JSON) of a training stage."""

import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any

from errornet.training.training_basics import StepRecord, TrainExecution
from errornet.utils.errors import DataError

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "step",
    "stage",
    "loss",
    "loss_seg",
    "loss_recon",
    "loss_kl",
    "loss_pred",
    "val_metric",
)


def _number(value: float | None) -> str:
    return "" if value is None else repr(float(value))


class RunRecorder:
    """Records the loss log and summary of one training stage."""

    def __init__(self, log_path: str | Path, summary_path: str | Path | None = None):
        """
        Args:
            log_path: CSV file receiving one row per optimiser step.
            summary_path: JSON summary; defaults to the log path with a .json suffix.
        """
        self.log_path: Path = Path(log_path)
        self.summary_path: Path = (
            Path(summary_path) if summary_path else self.log_path.with_suffix(".json")
        )
        self.summary: dict[str, Any] = {
            "stage": "",
            "config": [],
            "start_time": "",
            "end_time": "",
            "epochs": [],
            "best_metric": None,
            "best_epoch": None,
            "frozen_digests": {},
            "success": False,
            "error": None,
            "execution_time": 0.0,
        }

    def start_recording(
        self, stage: str, config_lines: list[str], resume_step: int | None = None
    ) -> None:
        """
        Start a fresh log, or keep the rows up to `resume_step` when resuming.

        Rows past the resumed step belong to work that the checkpoint does not contain.
        """
        self.summary.update(
            {"stage": stage, "config": config_lines, "start_time": datetime.now().isoformat()}
        )
        kept: list[list[str]] = []
        if resume_step is not None and self.log_path.is_file():
            with open(self.log_path, newline="", encoding="utf-8") as f:
                rows = list(csv.reader(f))
            kept = [row for row in rows[1:] if row and int(row[0]) <= resume_step]
            logger.info("Resuming %s log at step %d (%d rows kept)", stage, resume_step, len(kept))
        self._write_rows([list(CSV_COLUMNS), *kept], mode="w")

    def record_epoch(self, steps: list[StepRecord], val_metric: float) -> None:
        """Append an epoch's step rows; the validation metric goes on its last row."""
        rows = []
        for i, record in enumerate(steps):
            c = record.components
            rows.append(
                [
                    str(record.step),
                    record.stage,
                    _number(record.loss),
                    _number(c.get("seg")),
                    _number(c.get("recon")),
                    _number(c.get("kl")),
                    _number(c.get("pred")),
                    _number(val_metric) if i == len(steps) - 1 else "",
                ]
            )
        self._write_rows(rows, mode="a")

    def finalize_recording(self, execution: TrainExecution) -> None:
        self.summary.update(
            {
                "end_time": datetime.now().isoformat(),
                "epochs": [
                    {
                        "epoch": e.epoch,
                        "step": e.step,
                        "loss": e.loss,
                        "components": e.components,
                        "val_metric": e.val_metric,
                        "improved": e.improved,
                    }
                    for e in execution.epochs
                ],
                "metric": execution.metric_name,
                "best_metric": execution.best_metric,
                "best_epoch": execution.best_epoch,
                "frozen_digests": execution.frozen_digests,
                "state": execution.state.value,
                "success": execution.success,
                "error": execution.error,
                "execution_time": execution.execution_time,
            }
        )
        self.save_summary()

    def save_summary(self) -> None:
        self.summary_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.summary_path, "w", encoding="utf-8") as f:
            json.dump(self.summary, f, indent=2, ensure_ascii=False)

    def read_log(self) -> list[dict[str, str]]:
        with open(self.log_path, newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))

    def _write_rows(self, rows: list[list[str]], mode: str) -> None:
        try:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, mode, newline="", encoding="utf-8") as f:
                csv.writer(f, lineterminator="\n").writerows(rows)
        except OSError as e:
            raise DataError(f"Cannot write training log {self.log_path}: {e.strerror}") from e
