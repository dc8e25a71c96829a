# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Cross-domain Dice / IoU grids and their CSV and Markdown reports."""

import csv
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from errornet.data.dataset import Sample, binarize, iter_batches
from errornet.evaluation.inference import (
    ABLATION_FLAGS,
    VARIANTS,
    ErrorNetPipeline,
    uncorrected_variant,
)
from errornet.evaluation.metrics import dice, iou
from errornet.utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

METRICS = ("dice", "iou")
REPORT_COLUMNS = (
    "variant",
    "err_pred",
    "vae",
    "joint",
    "metric",
    "train",
    "test",
    "value",
    "percent",
)
AVERAGE_LABEL = "average"
EVAL_BATCH_SIZE = 8


def percent(value: float) -> str:
    return f"{100.0 * value:.1f}"


@dataclass
class MetricsMatrix:
    """
    Mean Dice and IoU of every (train domain, test domain) pair for one variant.

    Rows are train domains and columns test domains; a cell whose row and column name the
    same domain is a same-domain evaluation.
    """

    rows: list[str]
    columns: list[str]
    dice: np.ndarray
    iou: np.ndarray
    variant: str = "base"
    flags: tuple[bool, bool, bool] = (False, False, False)
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.rows), len(self.columns))
        for metric in METRICS:
            values = np.asarray(getattr(self, metric), dtype=np.float64)
            if values.shape != shape:
                raise ConfigError(f"{metric} grid has shape {values.shape}, expected {shape}")
            setattr(self, metric, values)

    def values(self, metric: str) -> np.ndarray:
        if metric not in METRICS:
            raise ConfigError(f"Unknown metric {metric}; choose from {', '.join(METRICS)}")
        return getattr(self, metric)

    def cell(self, train: str, test: str, metric: str = "dice") -> float:
        return float(self.values(metric)[self.rows.index(train), self.columns.index(test)])

    def is_same_domain(self, train: str, test: str) -> bool:
        return train == test

    def same_domain_mask(self) -> np.ndarray:
        return np.array([[r == c for c in self.columns] for r in self.rows], dtype=bool)

    def row_averages(self, metric: str = "dice") -> np.ndarray:
        return self.values(metric).mean(axis=1)

    def shifted_average(self, metric: str = "dice") -> float:
        """Mean over the cells evaluated on a domain other than the training one."""
        shifted = ~self.same_domain_mask()
        if not shifted.any():
            raise ConfigError("No cross-domain cells in the matrix")
        return float(self.values(metric)[shifted].mean())

    def same_domain_average(self, metric: str = "dice") -> float:
        same = self.same_domain_mask()
        if not same.any():
            raise ConfigError("No same-domain cells in the matrix")
        return float(self.values(metric)[same].mean())

    def records(self) -> list[dict[str, str]]:
        """One report row per cell and per row average, for both metrics."""
        err_pred, vae, joint = (str(flag).lower() for flag in self.flags)
        records = []
        for metric in METRICS:
            grid, averages = self.values(metric), self.row_averages(metric)
            for i, train in enumerate(self.rows):
                cells = [(test, grid[i, j]) for j, test in enumerate(self.columns)]
                for test, value in [*cells, (AVERAGE_LABEL, averages[i])]:
                    records.append(
                        {
                            "variant": self.variant,
                            "err_pred": err_pred,
                            "vae": vae,
                            "joint": joint,
                            "metric": metric,
                            "train": train,
                            "test": test,
                            "value": repr(float(value)),
                            "percent": percent(float(value)),
                        }
                    )
        return records


def score_samples(
    pipeline: ErrorNetPipeline, samples: Sequence[Sample], with_correction: bool
) -> tuple[float, float]:
    """Mean Dice and IoU of the binarised prediction over normalised samples."""
    if not samples:
        raise DataError("No samples to evaluate")
    dices, ious = [], []
    for batch in iter_batches(samples, EVAL_BATCH_SIZE, shuffle=False):
        prediction = binarize(pipeline.predict(batch.images, with_correction=with_correction))
        for i in range(len(batch)):
            dices.append(dice(prediction[i], batch.masks[i], batch.fovs[i]))
            ious.append(iou(prediction[i], batch.masks[i], batch.fovs[i]))
    return float(np.mean(dices)), float(np.mean(ious))


def evaluate_matrix(
    models: Mapping[str, ErrorNetPipeline],
    datasets: Mapping[str, Sequence[Sample]],
    with_correction: bool = True,
    variant: str | None = None,
) -> MetricsMatrix:
    """
    Score every model (keyed by train domain) on every test split (keyed by test domain).

    Cells are filled in (row, column) order. `with_correction=False` scores the bare
    segmentation S of the same models, labelled with the matching uncorrected variant.
    """
    gaps = ["no model for any train domain"] if not models else []
    gaps += [f"empty test split for {name}" for name, samples in datasets.items() if not samples]
    if not datasets:
        gaps.append("no test datasets")
    resolutions = {model.spec.resolution for model in models.values()}
    resolutions |= {s.resolution for samples in datasets.values() for s in samples[:1]}
    if len(resolutions) > 1:
        gaps.append(f"models and datasets disagree on resolution ({sorted(resolutions)})")
    if gaps:
        raise ConfigError(f"Cannot evaluate: {'; '.join(gaps)}")

    rows, columns = list(models), list(datasets)
    if variant is None:
        variants = {model.variant for model in models.values()}
        variant = variants.pop() if len(variants) == 1 else "mixed"
    if not with_correction and variant in VARIANTS:
        variant = uncorrected_variant(variant)
    elif not with_correction:
        variant = "base"
    dice_grid = np.zeros((len(rows), len(columns)))
    iou_grid = np.zeros((len(rows), len(columns)))
    for i, train in enumerate(rows):
        for j, test in enumerate(columns):
            dice_grid[i, j], iou_grid[i, j] = score_samples(
                models[train], datasets[test], with_correction
            )
            logger.info(
                "%s %s -> %s: dice %.4f iou %.4f",
                variant,
                train,
                test,
                dice_grid[i, j],
                iou_grid[i, j],
            )
    return MetricsMatrix(
        rows=rows,
        columns=columns,
        dice=dice_grid,
        iou=iou_grid,
        variant=variant,
        flags=ABLATION_FLAGS.get(variant, (False, False, False)),
        counts={test: len(samples) for test, samples in datasets.items()},
    )


def load_pipelines(
    checkpoint_dirs: Mapping[str, str | Path], variant: str
) -> dict[str, ErrorNetPipeline]:
    """Load one variant per train domain; every missing checkpoint is reported at once."""
    gaps = []
    for train, directory in checkpoint_dirs.items():
        if variant not in ErrorNetPipeline.available_variants(directory):
            gaps.append(f"{train} ({directory})")
    if gaps:
        raise ConfigError(f"Missing {variant} checkpoints for: {', '.join(gaps)}")
    return {
        train: ErrorNetPipeline.from_checkpoints(directory, variant)
        for train, directory in checkpoint_dirs.items()
    }


def write_csv_report(matrices: Sequence[MetricsMatrix], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for matrix in matrices:
            writer.writerows(matrix.records())
    return path


def _check(flag: bool) -> str:
    return "x" if flag else ""


def markdown_table(matrices: Sequence[MetricsMatrix], metric: str) -> str:
    """
    Train-on / test-on grid of one metric in percent, one line per (variant, train domain).

    Same-domain cells are set in bold.
    """
    columns = list(matrices[0].columns) if matrices else []
    header = ["Variant", "Err Pred", "VAE", "Joint", "Train on", *columns, "Avg"]
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join(["---"] * 5 + ["---:"] * (len(columns) + 1)) + " |",
    ]
    for matrix in matrices:
        grid, averages = matrix.values(metric), matrix.row_averages(metric)
        for i, train in enumerate(matrix.rows):
            cells = []
            for j, test in enumerate(matrix.columns):
                text = percent(float(grid[i, j]))
                cells.append(f"**{text}**" if matrix.is_same_domain(train, test) else text)
            row = [matrix.variant, *(_check(f) for f in matrix.flags), train]
            lines.append("| " + " | ".join([*row, *cells, percent(float(averages[i]))]) + " |")
    return "\n".join(lines)


def write_markdown_report(matrices: Sequence[MetricsMatrix], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sections = []
    for metric in METRICS:
        sections.append(f"## {metric.upper() if metric == 'iou' else metric.capitalize()}\n")
        sections.append(markdown_table(matrices, metric) + "\n")
    path.write_text("\n".join(sections), encoding="utf-8")
    return path


def write_reports(matrices: Sequence[MetricsMatrix], directory: str | Path) -> tuple[Path, Path]:
    """`report.csv` and `report.md` with identical numbers."""
    directory = Path(directory)
    return (
        write_csv_report(matrices, directory / "report.csv"),
        write_markdown_report(matrices, directory / "report.md"),
    )
