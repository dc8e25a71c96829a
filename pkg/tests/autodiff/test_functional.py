# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import unittest

import numpy as np

from errornet.autodiff import DimensionError, Tensor, backward, gradcheck
from errornet.autodiff import functional as F


def weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    """Reduce an output to a scalar with fixed random weights so every element matters."""
    return F.sum_all(F.mul(out, weights))


def conv2d_loop(x, w, b):
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, cout, h, wd))
    for i in range(n):
        for o in range(cout):
            for y in range(h):
                for z in range(wd):
                    out[i, o, y, z] = np.sum(padded[i, :, y : y + 3, z : z + 3] * w[o]) + b[o]
    return out


def conv_transpose2d_loop(x, w, b):
    n, cin, h, wd = x.shape
    cout = w.shape[1]
    full = np.zeros((n, cout, 2 * h + 1, 2 * wd + 1))
    for i in range(n):
        for c in range(cin):
            for y in range(h):
                for z in range(wd):
                    for ky in range(3):
                        for kx in range(3):
                            full[i, :, 2 * y + ky, 2 * z + kx] += x[i, c, y, z] * w[c, :, ky, kx]
    return full[:, :, 1 : 2 * h + 1, 1 : 2 * wd + 1] + b[None, :, None, None]


class TestForwardOracles(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_conv2d_matches_loop(self):
        x = self.rng.normal(size=(2, 3, 5, 4))
        w = self.rng.normal(size=(2, 3, 3, 3))
        b = self.rng.normal(size=2)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b))
        self.assertEqual(out.shape, (2, 2, 5, 4))
        np.testing.assert_allclose(out.data, conv2d_loop(x, w, b), rtol=1e-4, atol=1e-4)

    def test_conv_transpose2d_matches_loop(self):
        x = self.rng.normal(size=(2, 2, 3, 4))
        w = self.rng.normal(size=(2, 3, 3, 3))
        b = self.rng.normal(size=3)
        out = F.conv_transpose2d(Tensor(x), Tensor(w), Tensor(b))
        self.assertEqual(out.shape, (2, 3, 6, 8))
        np.testing.assert_allclose(out.data, conv_transpose2d_loop(x, w, b), rtol=1e-4, atol=1e-4)

    def test_conv2d_rejects_channel_mismatch(self):
        with self.assertRaises(DimensionError):
            F.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))), Tensor([0.0]))

    def test_maxpool_tie_goes_to_first_element(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        backward(F.sum_all(F.maxpool2d(x)))
        np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_maxpool_rejects_odd_size(self):
        with self.assertRaises(DimensionError):
            F.maxpool2d(Tensor(np.zeros((1, 1, 3, 4))))

    def test_upsample_repeats_pixels(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        out = F.upsample_nearest(x).data[0, 0]
        np.testing.assert_array_equal(out[:2, :2], np.zeros((2, 2)))
        np.testing.assert_array_equal(out[2:, 2:], np.full((2, 2), 3.0))

    def test_sigmoid_stays_in_open_interval(self):
        out = F.activation(Tensor([-1000.0, 0.0, 1000.0]), "sigmoid").data
        self.assertTrue(np.all(out > 0.0))
        self.assertTrue(np.all(out < 1.0))
        self.assertAlmostEqual(float(out[1]), 0.5)

    def test_leaky_relu_slope(self):
        out = F.activation(Tensor([-2.0, 3.0]), "leaky_relu").data
        np.testing.assert_allclose(out, [-0.02, 3.0], rtol=1e-6)

    def test_instance_norm_moments(self):
        x = Tensor(self.rng.normal(3.0, 2.0, size=(2, 3, 8, 8)))
        out = F.normalize(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), "instance").data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.std(axis=(2, 3)), 1.0, atol=1e-3)

    def test_batch_norm_running_stats(self):
        x = self.rng.normal(1.0, 2.0, size=(4, 2, 4, 4))
        mean, var = np.zeros(2, dtype=np.float32), np.ones(2, dtype=np.float32)
        gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
        F.normalize(Tensor(x), gamma, beta, "batch", running_mean=mean, running_var=var)
        np.testing.assert_allclose(mean, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-4)
        np.testing.assert_allclose(var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)), rtol=1e-4)

        frozen_mean, frozen_var = mean.copy(), var.copy()
        out = F.normalize(
            Tensor(x), gamma, beta, "batch", training=False, running_mean=mean, running_var=var
        ).data
        np.testing.assert_array_equal(mean, frozen_mean)
        expected = (x - frozen_mean[None, :, None, None]) / np.sqrt(
            frozen_var[None, :, None, None] + 1e-5
        )
        np.testing.assert_allclose(out, expected, rtol=1e-4, atol=1e-5)

    def test_clamp_blocks_gradient_outside(self):
        x = Tensor([-0.5, 0.5, 1.5], requires_grad=True)
        backward(F.sum_all(F.clamp(x, 0.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_straight_through_routes_gradient(self):
        x = Tensor([0.2, 0.4], requires_grad=True)
        replaced = F.straight_through(x, np.array([1.0, 0.0]))
        np.testing.assert_array_equal(replaced.data, [1.0, 0.0])
        backward(weighted(replaced, np.array([2.0, 3.0])))
        np.testing.assert_allclose(x.grad, [2.0, 3.0])

    def test_reshape_mismatch(self):
        with self.assertRaises(DimensionError):
            F.reshape(Tensor(np.zeros(6)), (4, 2))


class TestGradients(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)

    def check(self, fn, *arrays):
        result = gradcheck(fn, arrays)
        self.assertTrue(
            result.passed, f"input {result.worst_input}: rel error {result.max_rel_error:.2e}"
        )

    def test_conv2d(self):
        r = self.rng.normal(size=(2, 2, 4, 4))
        self.check(
            lambda x, w, b: weighted(F.conv2d(x, w, b), r),
            self.rng.normal(size=(2, 3, 4, 4)),
            self.rng.normal(size=(2, 3, 3, 3)),
            self.rng.normal(size=2),
        )

    def test_conv_transpose2d(self):
        r = self.rng.normal(size=(1, 2, 6, 4))
        self.check(
            lambda x, w, b: weighted(F.conv_transpose2d(x, w, b), r),
            self.rng.normal(size=(1, 3, 3, 2)),
            self.rng.normal(size=(3, 2, 3, 3)),
            self.rng.normal(size=2),
        )

    def test_maxpool_and_upsample(self):
        r = self.rng.normal(size=(1, 2, 4, 4))
        self.check(
            lambda x: weighted(F.upsample_nearest(F.maxpool2d(x)), r),
            self.rng.normal(size=(1, 2, 4, 4)),
        )

    def test_instance_norm(self):
        r = self.rng.normal(size=(2, 2, 3, 3))
        self.check(
            lambda x, g, b: weighted(F.normalize(x, g, b, "instance"), r),
            self.rng.normal(size=(2, 2, 3, 3)),
            self.rng.normal(size=2),
            self.rng.normal(size=2),
        )

    def test_batch_norm(self):
        r = self.rng.normal(size=(3, 2, 2, 2))
        self.check(
            lambda x, g, b: weighted(F.normalize(x, g, b, "batch"), r),
            self.rng.normal(size=(3, 2, 2, 2)),
            self.rng.normal(size=2),
            self.rng.normal(size=2),
        )

    def test_activations(self):
        x = self.rng.normal(size=(2, 5))
        # keep inputs away from the ReLU kink
        x = np.where(np.abs(x) < 0.1, 0.5, x)
        r = self.rng.normal(size=(2, 5))
        for kind in ("leaky_relu", "relu", "sigmoid", "tanh"):
            with self.subTest(kind=kind):
                self.check(lambda t, kind=kind: weighted(F.activation(t, kind), r), x)

    def test_dense(self):
        r = self.rng.normal(size=(2, 3))
        self.check(
            lambda x, w, b: weighted(F.dense(F.flatten(x), w, b), r),
            self.rng.normal(size=(2, 1, 2, 2)),
            self.rng.normal(size=(4, 3)),
            self.rng.normal(size=3),
        )

    def test_concat(self):
        r = self.rng.normal(size=(1, 3, 2, 2))
        self.check(
            lambda a, b: weighted(F.concat_channels(a, b), r),
            self.rng.normal(size=(1, 1, 2, 2)),
            self.rng.normal(size=(1, 2, 2, 2)),
        )

    def test_elementwise(self):
        r = self.rng.normal(size=(3,))
        self.check(
            lambda a, b: weighted(F.sub(F.mul(F.exp(a), b), F.log(F.add(F.mul(b, b), 1.0))), r),
            self.rng.normal(size=(3,)),
            self.rng.normal(size=(3,)),
        )

    def test_broadcast_add(self):
        r = self.rng.normal(size=(2, 3))
        self.check(
            lambda a, b: weighted(F.add(a, b), r),
            self.rng.normal(size=(2, 3)),
            self.rng.normal(size=(3,)),
        )

    def test_mean_and_clamp(self):
        x = np.array([-0.7, -0.2, 0.3, 0.6])
        self.check(lambda t: F.mean_all(F.mul(F.clamp(t, -0.5, 0.5), t)), x)


if __name__ == "__main__":
    unittest.main()
