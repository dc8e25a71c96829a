# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import unittest

import numpy as np

from errornet.autodiff import DimensionError, ParamStore, adam_step, backward
from errornet.autodiff import functional as F
from errornet.utils.errors import UsageError


def make_store() -> ParamStore:
    store = ParamStore()
    store.add("w", np.array([1.0, -2.0, 3.0]))
    store.add("b", np.array([0.5]))
    store.add_buffer("running_mean", np.zeros(3))
    return store


def quadratic_loss(store: ParamStore):
    return F.add(F.sum_all(F.mul(store["w"], store["w"])), F.sum_all(store["b"]))


class TestParamStore(unittest.TestCase):
    def test_duplicate_names_rejected(self):
        store = make_store()
        with self.assertRaises(UsageError):
            store.add("w", np.zeros(3))

    def test_first_adam_step_moves_by_learning_rate(self):
        store = make_store()
        before = store["w"].data.copy()
        backward(quadratic_loss(store))
        adam_step(store, lr=0.1)
        np.testing.assert_allclose(store["w"].data, before - 0.1 * np.sign(before), rtol=1e-5)
        self.assertEqual(store.step, 1)
        self.assertIsNone(store["w"].grad)

    def test_adam_requires_gradients(self):
        store = make_store()
        with self.assertRaises(UsageError):
            adam_step(store)

    def test_frozen_store_is_untouched(self):
        store = make_store()
        digest = store.digest()
        store.freeze()
        self.assertTrue(store.frozen)
        adam_step(store)
        self.assertEqual(store.digest(), digest)
        self.assertEqual(store.step, 0)

    def test_partial_freeze(self):
        store = make_store()
        store.freeze(["b"])
        self.assertTrue(store.is_frozen("b"))
        self.assertFalse(store.frozen)
        b_before = store["b"].data.copy()
        backward(quadratic_loss(store))
        self.assertIsNone(store["b"].grad)
        adam_step(store)
        np.testing.assert_array_equal(store["b"].data, b_before)
        self.assertEqual(set(store.moments), {"w"})

    def test_digest_tracks_buffers(self):
        store = make_store()
        digest = store.digest()
        store.buffers["running_mean"][0] = 1.0
        self.assertNotEqual(store.digest(), digest)

    def test_load_arrays(self):
        store = make_store()
        arrays = {"w": np.array([7.0, 8.0, 9.0]), "b": np.array([1.0])}
        store.load_arrays(arrays, {"running_mean": np.ones(3)})
        np.testing.assert_array_equal(store["w"].data, [7.0, 8.0, 9.0])
        np.testing.assert_array_equal(store.buffers["running_mean"], np.ones(3))

        with self.assertRaises(DimensionError):
            store.load_arrays({"w": np.zeros(2), "b": np.zeros(1)}, {"running_mean": np.ones(3)})
        with self.assertRaises(UsageError):
            store.load_arrays({"w": np.zeros(3)}, {"running_mean": np.ones(3)})

    def test_num_parameters(self):
        self.assertEqual(make_store().num_parameters(), 4)


if __name__ == "__main__":
    unittest.main()
