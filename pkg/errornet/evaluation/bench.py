# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Desk-scale cross-domain benchmark: train the full pipeline per seed and compare variants."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from errornet.data import binarize, craft_broken_vessel, load_domain, normalize_fov
from errornet.evaluation.inference import VARIANTS, ErrorNetPipeline, correct
from errornet.evaluation.matrix import MetricsMatrix, evaluate_matrix, write_reports
from errornet.evaluation.metrics import count_components
from errornet.training.trainer import train_stage
from errornet.utils.cli import CLIConsole, ConsoleFactory, ConsoleType
from errornet.utils.config import RunConfig
from errornet.utils.errors import ConfigError, UsageError

logger = logging.getLogger(__name__)

# (stage, use_vae) in training order; err without the VAE is the err-pred-only ablation
BENCH_STAGES: tuple[tuple[str, bool], ...] = (
    ("seg", True),
    ("vae", True),
    ("err", False),
    ("err", True),
    ("joint", True),
)
ABLATION_ORDER = ("err_only", "stagewise", "joint")
MIN_SHIFTED_GAIN = 0.01
MAX_SAME_DOMAIN_DROP = 0.005
MAX_RUNTIME_SECONDS = 20 * 60
SUMMARY_FILE = "bench_summary.yaml"


@dataclass
class SeedResult:
    seed: int
    matrices: dict[str, MetricsMatrix]
    components_before: int
    components_after: int
    duration: float

    def shifted(self, variant: str) -> float:
        return self.matrices[variant].shifted_average("dice")

    def same_domain(self, variant: str) -> float:
        return self.matrices[variant].same_domain_average("dice")


@dataclass
class BenchResult:
    """Per-seed matrices and the criteria computed over their seed averages."""

    train_domain: str
    eval_domains: list[str]
    seeds: list[SeedResult] = field(default_factory=list)
    runtime: float = 0.0

    def mean_shifted(self, variant: str) -> float:
        return float(np.mean([s.shifted(variant) for s in self.seeds]))

    def mean_same_domain(self, variant: str) -> float:
        return float(np.mean([s.same_domain(variant) for s in self.seeds]))

    def criteria(self) -> dict[str, Any]:
        gain = self.mean_shifted("joint") - self.mean_shifted("base")
        drop = self.mean_same_domain("base") - self.mean_same_domain("joint")
        ablation = [self.mean_shifted(v) for v in ABLATION_ORDER]
        bridged = [s.components_after < s.components_before for s in self.seeds]
        return {
            "shifted_gain": {
                "base": self.mean_shifted("base"),
                "joint": self.mean_shifted("joint"),
                "gain_points": 100.0 * gain,
                "passed": bool(gain >= MIN_SHIFTED_GAIN),
            },
            "same_domain": {
                "base": self.mean_same_domain("base"),
                "joint": self.mean_same_domain("joint"),
                "drop_points": 100.0 * drop,
                "passed": bool(drop <= MAX_SAME_DOMAIN_DROP),
            },
            "ablation_order": {
                "variants": list(ABLATION_ORDER),
                "shifted_dice": ablation,
                "passed": bool(all(a <= b for a, b in zip(ablation, ablation[1:]))),
            },
            "break_bridging": {
                "components_before": [s.components_before for s in self.seeds],
                "components_after": [s.components_after for s in self.seeds],
                "passed": bool(all(bridged)),
            },
        }

    def timing(self) -> dict[str, Any]:
        return {
            "seconds": self.runtime,
            "limit_seconds": MAX_RUNTIME_SECONDS,
            "passed": bool(self.runtime < MAX_RUNTIME_SECONDS),
        }

    def correction_after_joint(self) -> dict[str, float]:
        """Shifted-domain Dice the error map adds on top of the jointly trained segmenter."""
        bare = self.mean_shifted("joint_nocorr")
        corrected = self.mean_shifted("joint")
        return {
            "joint_nocorr": bare,
            "joint": corrected,
            "gain_points": 100.0 * (corrected - bare),
        }

    def summary(self) -> dict[str, Any]:
        return {
            "train_domain": self.train_domain,
            "eval_domains": list(self.eval_domains),
            "seeds": [s.seed for s in self.seeds],
            "variants": {
                variant: {
                    "shifted_dice": [s.shifted(variant) for s in self.seeds],
                    "same_domain_dice": [s.same_domain(variant) for s in self.seeds],
                }
                for variant in VARIANTS
            },
            "correction_after_joint": self.correction_after_joint(),
            "criteria": self.criteria(),
            "timing": self.timing(),
        }


def break_bridging(pipeline: ErrorNetPipeline, resolution: int, seed: int) -> tuple[int, int]:
    """Connected components of the crafted broken segmentation before and after correction."""
    if pipeline.predictor is None:
        raise UsageError(f"Variant {pipeline.variant} does not correct")
    crafted = craft_broken_vessel(resolution=resolution, seed=seed)
    image = normalize_fov(crafted.sample).image
    corrected = correct(pipeline.predictor, image, crafted.segmentation)
    return count_components(binarize(crafted.segmentation)), count_components(binarize(corrected))


class DeskBenchmark:
    """Runs seeds x (seg, vae, err_novae, err, joint) on one domain and scores every variant."""

    def __init__(self, config: RunConfig, console_type: ConsoleType | None = None):
        self.config: RunConfig = config
        self.console_type: ConsoleType | None = console_type
        self.output_dir: Path = config.output_path

    def seed_config(self, seed: int) -> RunConfig:
        return self.config.replace(
            seed=seed,
            output_dir=str(self.output_dir / f"seed-{seed}"),
            checkpoint_dir=None,
            resume=False,
        )

    def _console(self) -> CLIConsole | None:
        if self.console_type is None:
            return None
        return ConsoleFactory.create_console(self.console_type)

    def train_all(self, config: RunConfig) -> None:
        splits = load_domain(config, config.train_domain).normalized()
        for stage, use_vae in BENCH_STAGES:
            stage_config = config.replace(stage=stage, use_vae=use_vae)
            logger.info("Seed %d: training %s (use_vae=%s)", config.seed, stage, use_vae)
            train_stage(stage_config, splits, cli_console=self._console())

    def evaluate(self, config: RunConfig) -> dict[str, MetricsMatrix]:
        datasets = {
            domain: load_domain(config, domain).normalized().test
            for domain in config.eval_domains
        }
        matrices = {}
        for variant in VARIANTS:
            pipeline = ErrorNetPipeline.from_checkpoints(config.checkpoint_path, variant)
            matrices[variant] = evaluate_matrix(
                {config.train_domain: pipeline},
                datasets,
                with_correction=pipeline.corrects,
                variant=variant,
            )
        write_reports(list(matrices.values()), config.output_path)
        return matrices

    def run_one_seed(self, seed: int) -> SeedResult:
        start = time.time()
        config = self.seed_config(seed)
        config.write_effective()
        self.train_all(config)
        matrices = self.evaluate(config)
        joint = ErrorNetPipeline.from_checkpoints(config.checkpoint_path, "joint")
        before, after = break_bridging(joint, config.resolution, seed)
        return SeedResult(seed, matrices, before, after, time.time() - start)

    def run_all(self) -> BenchResult:
        start = time.time()
        result = BenchResult(self.config.train_domain, list(self.config.eval_domains))
        for seed in self.config.bench_seeds:
            result.seeds.append(self.run_one_seed(seed))
        result.runtime = time.time() - start
        self.write_summary(result)
        return result

    def write_summary(self, result: BenchResult) -> Path:
        path = self.output_dir / SUMMARY_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(result.summary(), f, sort_keys=False)
        logger.info("Benchmark summary written to %s", path)
        return path


def run_bench(config: RunConfig, console_type: ConsoleType | None = None) -> BenchResult:
    if not config.bench_seeds:
        raise ConfigError("bench_seeds is empty")
    if config.train_domain not in config.eval_domains:
        raise ConfigError(f"train_domain {config.train_domain} must be one of eval_domains")
    return DeskBenchmark(config, console_type).run_all()
