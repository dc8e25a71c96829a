# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

"""Stage-wise and joint training loops."""

import logging
import time
from abc import ABC, abstractmethod
from collections.abc import Sequence
from pathlib import Path
from typing import Any, override

import numpy as np

from errornet.autodiff import adam_step, backward
from errornet.autodiff import functional as F
from errornet.autodiff.tensor import Tensor
from errornet.data import Batch, DatasetSplits, Sample, binarize, iter_batches, load_domain
from errornet.evaluation.inference import correct, evaluating, segment
from errornet.evaluation.metrics import dice
from errornet.networks import VAE, LatentRNG, Network, SegUNet, networks_registry
from errornet.training.checkpoint import (
    STAGE_OF_CHECKPOINT,
    Checkpoint,
    checkpoint_file,
    load_checkpoint,
    load_stage_checkpoint,
    save_checkpoint,
    spec_meta,
)
from errornet.training.losses import (
    LossValue,
    err_pred_loss,
    err_target,
    joint_loss,
    seg_loss,
    vae_loss,
)
from errornet.training.training_basics import (
    EpochRecord,
    Stage,
    StepRecord,
    TrainExecution,
    TrainState,
    stage_seed,
)
from errornet.utils.cli import CLIConsole
from errornet.utils.config import RunConfig
from errornet.utils.errors import (
    ConfigError,
    DataError,
    ErrorNetError,
    NumericalError,
    UsageError,
)
from errornet.utils.run_recorder import RunRecorder

logger = logging.getLogger(__name__)


class StageTrainer(ABC):
    """
    Trains the networks of one stage while the upstream ones stay frozen.

    Subclasses name the stores they train and freeze, the checkpoints they need, and
    provide the batch loss and the validation metric. Each epoch ends with validation;
    the best epoch is kept as `<name>.ckpt` and the latest as `<name>.last.ckpt`.
    """

    stage: Stage
    trained: tuple[str, ...] = ()
    frozen: tuple[str, ...] = ()
    metric_name: str = "dice"
    higher_is_better: bool = True

    def __init__(self, config: RunConfig, splits: DatasetSplits | None = None):
        """Initialize the trainer.

        Args:
            config: Run configuration; `config.stage` is not consulted.
            splits: Normalised samples; loaded from `config.train_domain` when omitted.
        """
        self._config = config
        self._splits = splits
        self._recorder: RunRecorder | None = None
        self._cli_console: CLIConsole | None = None
        self.latent_rng = LatentRNG(stage_seed(config.seed, self.stage))
        self.networks: dict[str, Network] = self.build_networks()

    @property
    def config(self) -> RunConfig:
        return self._config

    @property
    def recorder(self) -> RunRecorder | None:
        return self._recorder

    def set_recorder(self, recorder: RunRecorder | None) -> None:
        self._recorder = recorder

    @property
    def cli_console(self) -> CLIConsole | None:
        return self._cli_console

    def set_cli_console(self, cli_console: CLIConsole | None) -> None:
        self._cli_console = cli_console

    @property
    def splits(self) -> DatasetSplits:
        if self._splits is None:
            self._splits = load_domain(self.config, self.config.train_domain).normalized()
        return self._splits

    @property
    def checkpoint_name(self) -> str:
        return self.stage.value

    @property
    def requires(self) -> dict[str, tuple[str, ...]]:
        """Checkpoint name -> stores restored from it before training."""
        return {}

    def build_networks(self) -> dict[str, Network]:
        config, spec = self.config, self.config.network_spec
        names = set(self.trained) | set(self.frozen)
        options: dict[str, dict[str, Any]] = {
            "seg": {"seed": config.seed},
            "vae": {
                "seed": config.seed + 1,
                "rng": self.latent_rng,
                "inject_variance": config.inject_variance,
            },
            "err": {"seed": config.seed + 2, "depth": config.err_depth},
        }
        return {
            name: cls(spec, **options[name])
            for name, cls in networks_registry.items()
            if name in names
        }

    def net(self, name: str) -> Any:
        return self.networks[name]

    @abstractmethod
    def compute_loss(self, batch: Batch) -> LossValue:
        """Differentiable loss of one training batch."""
        pass

    @abstractmethod
    def validate(self, samples: Sequence[Sample]) -> float:
        pass

    def load_prerequisites(self) -> None:
        directory = self.config.checkpoint_path
        missing = [name for name in self.requires if not checkpoint_file(directory, name).is_file()]
        if missing:
            raise ConfigError(
                f"Stage {self.checkpoint_name} needs {', '.join(m + '.ckpt' for m in missing)} "
                f"in {directory}; run stage {STAGE_OF_CHECKPOINT[missing[0]]} first"
            )
        for name, stores in self.requires.items():
            checkpoint = load_stage_checkpoint(directory, name)
            checkpoint.restore_into(
                {store: self.networks[store].store for store in stores}, with_moments=False
            )
            logger.info("Restored %s from %s.ckpt", ", ".join(stores), name)

    def apply_freeze(self) -> None:
        for name in self.frozen:
            self.networks[name].freeze()
            self.networks[name].eval()
        for name in self.trained:
            self.networks[name].unfreeze()
            self.networks[name].train()

    def improves(self, value: float, best: float | None) -> bool:
        if best is None:
            return True
        return value > best if self.higher_is_better else value < best

    def make_checkpoint(self, step: int, epoch: int, meta: dict[str, Any]) -> Checkpoint:
        return Checkpoint.from_stores(
            self.stage.value,
            {name: self.networks[name].store for name in self.trained},
            step=step,
            epoch=epoch,
            rng_state=self.latent_rng.get_state(),
            meta={
                **spec_meta(self.config.network_spec, self.config.err_depth),
                "checkpoint": self.checkpoint_name,
                "metric": self.metric_name,
                "train_domain": self.config.train_domain,
                **meta,
            },
        )

    def _resume(self, execution: TrainExecution) -> tuple[int, int, int]:
        """Restore the latest epoch checkpoint; returns (next epoch, step, stale epochs)."""
        path = checkpoint_file(self.config.checkpoint_path, self.checkpoint_name, last=True)
        if not (self.config.resume and path.is_file()):
            return 1, 0, 0
        checkpoint = load_checkpoint(path)
        checkpoint.restore_into({name: self.networks[name].store for name in self.trained})
        if checkpoint.rng_state is not None:
            self.latent_rng.set_state(checkpoint.rng_state)
        execution.best_metric = checkpoint.meta.get("best_metric")
        execution.best_epoch = checkpoint.meta.get("best_epoch")
        logger.info(
            "Resuming %s after epoch %d (step %d)",
            self.checkpoint_name,
            checkpoint.epoch,
            checkpoint.step,
        )
        return checkpoint.epoch + 1, checkpoint.step, int(checkpoint.meta.get("stale", 0))

    def _train_epoch(self, epoch: int, step: int) -> list[StepRecord]:
        config = self.config
        records = []
        batches = iter_batches(
            self.splits.train,
            config.batch_size,
            seed=config.seed,
            epoch=epoch,
            prefetch=config.prefetch,
        )
        for batch in batches:
            step += 1
            try:
                loss = self.compute_loss(batch)
                backward(loss.total)
            except NumericalError as e:
                raise NumericalError(
                    f"{self.checkpoint_name}: {e.message} at step {step} (epoch {epoch})"
                ) from e
            for name in self.trained:
                adam_step(self.networks[name].store, lr=config.lr)
            records.append(StepRecord(step, self.stage.value, loss.scalar, loss.components))
        return records

    def execute(self) -> TrainExecution:
        """Run the stage; returns the execution record (errors are re-raised after logging)."""
        config = self.config
        execution = TrainExecution(
            stage=self.stage, checkpoint_name=self.checkpoint_name, metric_name=self.metric_name
        )
        start_time = time.time()
        record: EpochRecord | None = None
        try:
            self.load_prerequisites()
            self.apply_freeze()
            before = {name: self.networks[name].store.digest() for name in self.frozen}
            if not self.splits.train:
                raise DataError(f"{self.checkpoint_name}: empty training split")
            val_samples = self.splits.val
            if not val_samples:
                logger.warning("No validation samples; validating on the training split")
                val_samples = self.splits.train

            first_epoch, step, stale = self._resume(execution)
            if self.recorder:
                self.recorder.start_recording(
                    self.checkpoint_name,
                    config.effective_lines(),
                    resume_step=step if first_epoch > 1 else None,
                )
            execution.state = TrainState.RUNNING
            self._update_cli_console(None, execution)

            for epoch in range(first_epoch, config.epochs + 1):
                epoch_start = time.time()
                steps = self._train_epoch(epoch, step)
                if steps:
                    step = steps[-1].step
                execution.steps.extend(steps)
                val_metric = float(self.validate(val_samples))
                improved = self.improves(val_metric, execution.best_metric)
                if improved:
                    execution.best_metric, execution.best_epoch, stale = val_metric, epoch, 0
                else:
                    stale += 1
                meta = {
                    "best_metric": execution.best_metric,
                    "best_epoch": execution.best_epoch,
                    "stale": stale,
                    "val_metric": val_metric,
                }
                if improved:
                    save_checkpoint(
                        self.make_checkpoint(step, epoch, meta),
                        checkpoint_file(config.checkpoint_path, self.checkpoint_name),
                    )
                save_checkpoint(
                    self.make_checkpoint(step, epoch, meta),
                    checkpoint_file(config.checkpoint_path, self.checkpoint_name, last=True),
                )
                record = EpochRecord(
                    epoch=epoch,
                    step=step,
                    loss=float(np.mean([s.loss for s in steps])) if steps else float("nan"),
                    components={
                        key: float(np.mean([s.components[key] for s in steps]))
                        for key in (steps[0].components if steps else {})
                    },
                    val_metric=val_metric,
                    improved=improved,
                    duration=time.time() - epoch_start,
                )
                execution.epochs.append(record)
                if self.recorder:
                    self.recorder.record_epoch(steps, val_metric)
                self._update_cli_console(record, execution)
                if config.patience and stale >= config.patience:
                    logger.info("Early stop after %d epochs without improvement", stale)
                    execution.state = TrainState.EARLY_STOPPED
                    break

            after = {name: self.networks[name].store.digest() for name in self.frozen}
            changed = sorted(name for name in before if before[name] != after[name])
            if changed:
                raise UsageError(f"Frozen networks changed during training: {', '.join(changed)}")
            execution.frozen_digests = after
            execution.checkpoint_path = checkpoint_file(
                config.checkpoint_path, self.checkpoint_name
            )
            if execution.state == TrainState.RUNNING:
                execution.state = TrainState.COMPLETED
            execution.success = True
        except ErrorNetError as e:
            execution.state = TrainState.ERROR
            execution.error = e.message
            raise
        finally:
            execution.execution_time = time.time() - start_time
            if self.recorder:
                self.recorder.finalize_recording(execution)
            self._update_cli_console(None, execution)
        return execution

    def _update_cli_console(
        self, record: EpochRecord | None = None, execution: TrainExecution | None = None
    ) -> None:
        if self.cli_console:
            self.cli_console.update_status(record, execution)

    def _batches(self, samples: Sequence[Sample]) -> list[Batch]:
        if not samples:
            raise DataError(f"{self.checkpoint_name}: empty validation split")
        return list(iter_batches(samples, self.config.batch_size, shuffle=False))

    def segmentation_dice(self, samples: Sequence[Sample], corrected: bool) -> float:
        """Mean Dice of binarised S (or S* when `corrected`) against the masks."""
        seg: SegUNet = self.net("seg")
        scores = []
        for batch in self._batches(samples):
            s = segment(seg, batch.images)
            if corrected:
                s = correct(self.net("err"), batch.images, s)
            scores.extend(
                dice(binarize(s[i]), batch.masks[i], batch.fovs[i]) for i in range(len(batch))
            )
        return float(np.mean(scores))


class SegTrainer(StageTrainer):
    stage = Stage.SEG
    trained = ("seg",)

    @override
    def compute_loss(self, batch: Batch) -> LossValue:
        s = self.net("seg")(Tensor(batch.images))
        return seg_loss(s, batch.masks, batch.fovs, kind=self.config.seg_loss)

    @override
    def validate(self, samples: Sequence[Sample]) -> float:
        return self.segmentation_dice(samples, corrected=False)


class VaeTrainer(StageTrainer):
    """Learns a shape prior over the frozen segmentation network's outputs."""

    stage = Stage.VAE
    trained = ("vae",)
    frozen = ("seg",)
    metric_name = "vae_loss"
    higher_is_better = False

    @property
    @override
    def requires(self) -> dict[str, tuple[str, ...]]:
        return {"seg": ("seg",)}

    @override
    def compute_loss(self, batch: Batch) -> LossValue:
        with evaluating(self.net("seg")):
            s = self.net("seg")(Tensor(batch.images))
        out = self.net("vae").reconstruct(s, mode="train")
        return vae_loss(out.s_hat, s, out.mu, out.log_var, kl_weight=self.config.kl_weight)

    @override
    def validate(self, samples: Sequence[Sample]) -> float:
        seg: SegUNet = self.net("seg")
        vae: VAE = self.net("vae")
        totals = []
        with evaluating(seg, vae):
            for batch in self._batches(samples):
                s = seg(Tensor(batch.images))
                out = vae.reconstruct(s, mode="mean")
                loss = vae_loss(out.s_hat, s, out.mu, out.log_var, self.config.kl_weight)
                totals.append(loss.scalar * len(batch))
        return float(np.sum(totals) / len(samples))


class ErrTrainer(StageTrainer):
    """
    Trains the error predictor on (image, injected segmentation) pairs.

    With `use_vae=false` the predictor sees the raw segmentation instead, which gives the
    predictor-only ablation (`err_novae`).
    """

    stage = Stage.ERR
    trained = ("err",)

    def __init__(self, config: RunConfig, splits: DatasetSplits | None = None):
        self.frozen = ("seg", "vae") if config.use_vae else ("seg",)
        super().__init__(config, splits)

    @property
    @override
    def checkpoint_name(self) -> str:
        return "err" if self.config.use_vae else "err_novae"

    @property
    @override
    def requires(self) -> dict[str, tuple[str, ...]]:
        if self.config.use_vae:
            return {"seg": ("seg",), "vae": ("vae",)}
        return {"seg": ("seg",)}

    def degraded(self, images: np.ndarray) -> Tensor:
        """S, or its VAE-injected version, as a constant tensor."""
        with evaluating(*(self.networks[name] for name in self.frozen)):
            s = self.net("seg")(Tensor(images))
            if self.config.use_vae:
                s = self.net("vae").inject(s)
        return s

    @override
    def compute_loss(self, batch: Batch) -> LossValue:
        s_hat = self.degraded(batch.images)
        target = err_target(s_hat, batch.masks, mode=self.config.target_mode)
        e_hat = self.net("err")(Tensor(batch.images), s_hat)
        return err_pred_loss(e_hat, target)

    @override
    def validate(self, samples: Sequence[Sample]) -> float:
        return self.segmentation_dice(samples, corrected=True)


class JointTrainer(StageTrainer):
    """
    Fine-tunes segmentation network and predictor together on pred_weight * L_pred +
    seg_weight * L_seg with the VAE frozen.

    In `injected` mode the predictor input carries the value of the injected map while its
    gradient flows to S; in `raw` mode the predictor consumes S, as at test time.
    """

    stage = Stage.JOINT
    trained = ("seg", "err")
    frozen = ("vae",)

    @property
    @override
    def requires(self) -> dict[str, tuple[str, ...]]:
        return {"seg": ("seg",), "vae": ("vae",), "err": ("err",)}

    @override
    def compute_loss(self, batch: Batch) -> LossValue:
        config = self.config
        x = Tensor(batch.images)
        s = self.net("seg")(x)
        with evaluating(self.net("vae")):
            s_hat = self.net("vae").inject(s.detach())
        target = err_target(s_hat, batch.masks, mode=config.target_mode)
        pred_input = F.straight_through(s, s_hat.data) if config.joint_input == "injected" else s
        e_hat = self.net("err")(x, pred_input)
        return joint_loss(
            err_pred_loss(e_hat, target),
            seg_loss(s, batch.masks, batch.fovs, kind=config.seg_loss),
            pred_weight=config.pred_weight,
            seg_weight=config.seg_weight,
        )

    @override
    def validate(self, samples: Sequence[Sample]) -> float:
        return self.segmentation_dice(samples, corrected=True)


trainers_registry: dict[Stage, type[StageTrainer]] = {
    Stage.SEG: SegTrainer,
    Stage.VAE: VaeTrainer,
    Stage.ERR: ErrTrainer,
    Stage.JOINT: JointTrainer,
}


def create_trainer(config: RunConfig, splits: DatasetSplits | None = None) -> StageTrainer:
    return trainers_registry[Stage(config.stage)](config, splits)


def log_path(config: RunConfig, checkpoint_name: str) -> Path:
    return config.output_path / "logs" / f"{checkpoint_name}.csv"


def run_trainer(
    trainer: StageTrainer, record: bool = True, cli_console: CLIConsole | None = None
) -> TrainExecution:
    """Attach the loss log and console to a trainer and execute it."""
    if record:
        trainer.set_recorder(RunRecorder(log_path(trainer.config, trainer.checkpoint_name)))
    trainer.set_cli_console(cli_console)
    if cli_console is None:
        return trainer.execute()
    cli_console.start()
    try:
        return trainer.execute()
    finally:
        cli_console.stop()


def train_stage(
    config: RunConfig,
    splits: DatasetSplits | None = None,
    record: bool = True,
    cli_console: CLIConsole | None = None,
) -> Checkpoint:
    """Train `config.stage` and return its best checkpoint."""
    if config.stage == Stage.JOINT.value:
        return train_joint(config, splits, record, cli_console)
    execution = run_trainer(create_trainer(config, splits), record, cli_console)
    assert execution.checkpoint_path is not None
    return load_checkpoint(execution.checkpoint_path)


def train_joint(
    config: RunConfig,
    splits: DatasetSplits | None = None,
    record: bool = True,
    cli_console: CLIConsole | None = None,
) -> Checkpoint:
    execution = run_trainer(JointTrainer(config, splits), record, cli_console)
    assert execution.checkpoint_path is not None
    return load_checkpoint(execution.checkpoint_path)


__all__ = [
    "ErrTrainer",
    "JointTrainer",
    "SegTrainer",
    "StageTrainer",
    "VaeTrainer",
    "create_trainer",
    "log_path",
    "run_trainer",
    "train_joint",
    "train_stage",
    "trainers_registry",
]
