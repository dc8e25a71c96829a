# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from errornet.data import DatasetSplits, load_domain
from errornet.networks import VAE, SegUNet, networks_registry
from errornet.training import TrainState, load_checkpoint, load_stage_checkpoint
from errornet.training.trainer import (
    ErrTrainer,
    JointTrainer,
    SegTrainer,
    VaeTrainer,
    create_trainer,
    log_path,
    train_stage,
)
from errornet.utils.config import RunConfig
from errornet.utils.errors import ConfigError, DataError, UsageError
from errornet.utils.run_recorder import RunRecorder

NETWORKS = {"seg": SegUNet, "vae": VAE}


def tiny_config(output_dir: str, **overrides) -> RunConfig:
    values = {
        "output_dir": output_dir,
        "resolution": 32,
        "base_width": 2,
        "epochs": 2,
        "batch_size": 2,
        "n_train": 4,
        "n_val": 2,
        "n_test": 1,
        "patience": 0,
    }
    values.update(overrides)
    return RunConfig(**values)


class TestCreateTrainer(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.config = tiny_config(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_registry(self):
        expected = {"seg": SegTrainer, "vae": VaeTrainer, "err": ErrTrainer, "joint": JointTrainer}
        for stage, cls in expected.items():
            self.assertIsInstance(create_trainer(self.config.replace(stage=stage)), cls)

    def test_err_without_vae_is_its_own_checkpoint(self):
        trainer = create_trainer(self.config.replace(stage="err", use_vae=False))
        self.assertEqual(trainer.checkpoint_name, "err_novae")
        self.assertEqual(trainer.frozen, ("seg",))
        self.assertEqual(create_trainer(self.config.replace(stage="err")).frozen, ("seg", "vae"))

    def test_log_path(self):
        self.assertEqual(
            log_path(self.config, "err_novae"), Path(self.tmp.name) / "logs" / "err_novae.csv"
        )

    def test_missing_prerequisite_names_the_stage_to_run(self):
        with self.assertRaises(ConfigError) as ctx:
            train_stage(self.config.replace(stage="joint"), record=False)
        self.assertIn("run stage seg first", str(ctx.exception))

    def test_vae_needs_seg(self):
        with self.assertRaises(ConfigError) as ctx:
            train_stage(self.config.replace(stage="vae"), record=False)
        self.assertIn("seg.ckpt", str(ctx.exception))

    def test_networks_come_from_the_registry(self):
        trainer = create_trainer(self.config.replace(stage="joint", err_depth=4))
        self.assertEqual(list(trainer.networks), ["seg", "vae", "err"])
        for name, network in trainer.networks.items():
            self.assertIsInstance(network, networks_registry[name])
        self.assertEqual(trainer.net("err").depth, 4)
        self.assertIs(trainer.net("vae").rng, trainer.latent_rng)
        self.assertEqual(list(create_trainer(self.config).networks), ["seg"])

    def test_empty_validation_split_is_a_data_error(self):
        trainer = create_trainer(self.config)
        with self.assertRaises(DataError) as ctx:
            trainer.segmentation_dice([], corrected=False)
        self.assertIn("empty validation split", str(ctx.exception))

    def test_empty_training_split_is_a_data_error(self):
        trainer = create_trainer(self.config, DatasetSplits([], [], []))
        with self.assertRaises(DataError) as ctx:
            trainer.execute()
        self.assertIn("empty training split", str(ctx.exception))


@pytest.mark.slow
class TestStagePipeline(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.config = tiny_config(self.tmp.name)
        self.splits = load_domain(self.config, self.config.train_domain).normalized()

    def tearDown(self):
        self.tmp.cleanup()

    def train(self, stage: str, **overrides):
        trainer = create_trainer(self.config.replace(stage=stage, **overrides), self.splits)
        trainer.set_recorder(RunRecorder(log_path(trainer.config, trainer.checkpoint_name)))
        return trainer, trainer.execute()

    def stored_digest(self, name: str, config: RunConfig | None = None) -> str:
        """Digest of a network restored from its stage checkpoint."""
        config = config or self.config
        network = NETWORKS[name](config.network_spec)
        checkpoint = load_stage_checkpoint(config.checkpoint_path, name)
        checkpoint.restore_into({name: network.store}, with_moments=False)
        return network.store.digest()

    def test_stages_keep_frozen_networks_untouched(self):
        _, seg = self.train("seg")
        self.assertEqual(seg.state, TrainState.COMPLETED)
        seg_digest = self.stored_digest("seg")

        _, vae = self.train("vae")
        self.assertEqual(vae.frozen_digests, {"seg": seg_digest})
        vae_digest = self.stored_digest("vae")

        _, err = self.train("err")
        self.assertEqual(err.frozen_digests, {"seg": seg_digest, "vae": vae_digest})

        _, novae = self.train("err", use_vae=False)
        self.assertEqual(novae.frozen_digests, {"seg": seg_digest})
        self.assertTrue((self.config.checkpoint_path / "err_novae.ckpt").is_file())

        _, joint = self.train("joint")
        self.assertEqual(joint.frozen_digests, {"vae": vae_digest})
        checkpoint = load_stage_checkpoint(self.config.checkpoint_path, "joint")
        self.assertEqual(set(checkpoint.stores), {"seg", "err"})

    def test_loss_log_has_one_row_per_step(self):
        trainer, execution = self.train("seg")
        rows = trainer.recorder.read_log()
        self.assertEqual([int(r["step"]) for r in rows], [s.step for s in execution.steps])
        # 4 samples at batch size 2 for 2 epochs
        self.assertEqual(len(rows), 4)
        self.assertEqual([r["val_metric"] != "" for r in rows], [False, True, False, True])
        for row, step in zip(rows, execution.steps):
            self.assertEqual(float(row["loss"]), step.loss)
        self.assertTrue(trainer.recorder.summary_path.is_file())

    def test_best_and_last_checkpoints(self):
        _, execution = self.train("seg")
        best = load_checkpoint(self.config.checkpoint_path / "seg.ckpt")
        last = load_checkpoint(self.config.checkpoint_path / "seg.last.ckpt")
        self.assertEqual(last.epoch, 2)
        self.assertEqual(best.epoch, execution.best_epoch)
        self.assertEqual(best.meta["best_metric"], execution.best_metric)

    def test_resume_continues_the_same_run(self):
        _, full = self.train("seg")
        full_log = [s.loss for s in full.steps]

        other = tiny_config(str(Path(self.tmp.name) / "resumed"))
        first = create_trainer(other.replace(stage="seg", epochs=1), self.splits)
        first.execute()
        resumed = create_trainer(other.replace(stage="seg", resume=True), self.splits)
        second = resumed.execute()

        self.assertEqual([s.step for s in second.steps], [3, 4])
        np.testing.assert_allclose([s.loss for s in second.steps], full_log[2:], rtol=1e-5)
        a = load_checkpoint(self.config.checkpoint_path / "seg.last.ckpt")
        b = load_checkpoint(other.checkpoint_path / "seg.last.ckpt")
        for name, value in a.stores["seg"].params.items():
            np.testing.assert_allclose(b.stores["seg"].params[name], value, rtol=1e-5, atol=1e-7)

    def test_same_seed_gives_identical_checkpoints(self):
        other = tiny_config(str(Path(self.tmp.name) / "again"))
        first = train_stage(self.config, self.splits, record=False)
        second = train_stage(other, self.splits, record=False)
        self.assertEqual(self.stored_digest("seg"), self.stored_digest("seg", other))
        self.assertEqual(first.step, second.step)
        for name, value in first.stores["seg"].params.items():
            np.testing.assert_array_equal(second.stores["seg"].params[name], value)

    def test_validation_falls_back_to_the_training_split(self):
        splits = DatasetSplits(self.splits.train, [], self.splits.test)
        trainer = create_trainer(self.config.replace(stage="seg", epochs=1), splits)
        with self.assertLogs("errornet.training.trainer", level="WARNING") as logs:
            execution = trainer.execute()
        self.assertIn("validating on the training split", "\n".join(logs.output))
        self.assertEqual(execution.state, TrainState.COMPLETED)
        self.assertTrue(np.isfinite(execution.epochs[0].val_metric))
        self.assertEqual(
            execution.epochs[0].val_metric, trainer.segmentation_dice(splits.train, False)
        )

    def test_changed_frozen_network_is_a_usage_error(self):
        self.train("seg")
        trainer = create_trainer(self.config.replace(stage="vae", epochs=1), self.splits)
        validate = trainer.validate

        def validate_and_edit_seg(samples):
            _, tensor = next(iter(trainer.net("seg").store))
            tensor.data = tensor.data + 1.0
            return validate(samples)

        with (
            patch.object(trainer, "validate", side_effect=validate_and_edit_seg),
            self.assertRaises(UsageError) as ctx,
        ):
            trainer.execute()
        self.assertIn("Frozen networks changed during training: seg", str(ctx.exception))

    def test_patience_stops_after_the_first_stale_epoch(self):
        _, execution = self.train("seg", epochs=4, patience=1)
        improved = [e.improved for e in execution.epochs]
        self.assertTrue(improved[0])
        if all(improved):
            self.assertEqual(execution.state, TrainState.COMPLETED)
            self.assertEqual(len(improved), 4)
        else:
            self.assertEqual(execution.state, TrainState.EARLY_STOPPED)
            self.assertEqual(len(improved), improved.index(False) + 1)


if __name__ == "__main__":
    unittest.main()
