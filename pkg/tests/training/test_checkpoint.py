# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from errornet.autodiff import ParamStore, adam_step, backward
from errornet.autodiff import functional as F
from errornet.networks import LatentRNG, NetworkSpec
from errornet.training.checkpoint import (
    MAGIC,
    Checkpoint,
    CheckpointFormatError,
    checkpoint_file,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_stage_checkpoint,
    save_checkpoint,
    spec_from_meta,
    spec_meta,
)
from errornet.utils.errors import ConfigError, DataError


def trained_store() -> ParamStore:
    store = ParamStore()
    store.add("conv/weight", np.arange(12, dtype=np.float32).reshape(3, 4) / 10)
    store.add("conv/bias", np.array([0.5, -0.5], dtype=np.float32))
    store.add_buffer("bn/running_mean", np.array([0.1, 0.2], dtype=np.float32))
    loss = F.add(
        F.sum_all(F.mul(store["conv/weight"], store["conv/weight"])),
        F.sum_all(store["conv/bias"]),
    )
    backward(loss)
    adam_step(store, lr=0.01)
    return store


def make_checkpoint() -> Checkpoint:
    rng = LatentRNG(7)
    rng.normal((3,))
    return Checkpoint.from_stores(
        "seg",
        {"seg": trained_store()},
        step=5,
        epoch=2,
        rng_state=rng.get_state(),
        meta={**spec_meta(NetworkSpec(resolution=64, base_width=4), 3), "best_metric": 0.5},
    )


class TestCheckpointFormat(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_resave_is_byte_identical(self):
        first = save_checkpoint(make_checkpoint(), self.dir / "a.ckpt")
        second = save_checkpoint(load_checkpoint(first), self.dir / "b.ckpt")
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_restore_brings_back_weights_moments_and_buffers(self):
        original = trained_store()
        data = encode_checkpoint(Checkpoint.from_stores("seg", {"seg": original}))
        store = ParamStore()
        store.add("conv/weight", np.zeros((3, 4), dtype=np.float32))
        store.add("conv/bias", np.zeros(2, dtype=np.float32))
        store.add_buffer("bn/running_mean", np.zeros(2, dtype=np.float32))
        decode_checkpoint(data).restore_into({"seg": store})
        self.assertEqual(store.digest(), original.digest())
        self.assertEqual(store.step, 1)
        np.testing.assert_array_equal(
            store.moments["conv/weight"].m, original.moments["conv/weight"].m
        )

    def test_rng_state_round_trips(self):
        checkpoint = decode_checkpoint(encode_checkpoint(make_checkpoint()))
        rng, reference = LatentRNG(0), LatentRNG(7)
        reference.normal((3,))
        rng.set_state(checkpoint.rng_state)
        np.testing.assert_array_equal(rng.normal((4,)), reference.normal((4,)))
        self.assertEqual(rng.draws, reference.draws)

    def test_truncated_file_names_offset(self):
        data = encode_checkpoint(make_checkpoint())
        with self.assertRaises(CheckpointFormatError) as ctx:
            decode_checkpoint(data[:-1], "cut.ckpt")
        self.assertIn("byte", ctx.exception.message)
        self.assertIn("cut.ckpt", ctx.exception.message)

    def test_version_mismatch_rejected(self):
        data = bytearray(encode_checkpoint(make_checkpoint()))
        data[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
        with self.assertRaises(CheckpointFormatError) as ctx:
            decode_checkpoint(bytes(data))
        self.assertIn("version 99", ctx.exception.message)

    def test_bad_magic_rejected(self):
        with self.assertRaises(CheckpointFormatError):
            decode_checkpoint(b"NOTACKPT" + bytes(16))

    def test_format_error_is_a_data_error(self):
        self.assertTrue(issubclass(CheckpointFormatError, DataError))

    def test_missing_store_on_restore(self):
        checkpoint = make_checkpoint()
        with self.assertRaises(CheckpointFormatError):
            checkpoint.restore_into({"err": ParamStore()})


class TestStageCheckpoints(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_file_names(self):
        self.assertEqual(checkpoint_file(self.dir, "err").name, "err.ckpt")
        self.assertEqual(checkpoint_file(self.dir, "err", last=True).name, "err.last.ckpt")

    def test_missing_checkpoint_names_the_stage_to_run(self):
        with self.assertRaises(ConfigError) as ctx:
            load_stage_checkpoint(self.dir, "err_novae")
        self.assertIn("run stage err first", ctx.exception.message)

    def test_stage_tag_must_match(self):
        save_checkpoint(make_checkpoint(), checkpoint_file(self.dir, "vae"))
        with self.assertRaises(CheckpointFormatError):
            load_stage_checkpoint(self.dir, "vae")

    def test_spec_meta_round_trips(self):
        spec = NetworkSpec(resolution=32, base_width=2)
        self.assertEqual(spec_from_meta(spec_meta(spec, 4)), (spec, 4))

    def test_spec_meta_missing(self):
        with self.assertRaises(CheckpointFormatError):
            spec_from_meta({})


if __name__ == "__main__":
    unittest.main()
