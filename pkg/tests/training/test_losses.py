# Copyright (c) 2025 ErrorNet contributors
# SPDX-License-Identifier: MIT

import math
import unittest

import numpy as np

from errornet.autodiff import DimensionError, Tensor, backward, precision
from errornet.training.losses import (
    PROB_CLAMP,
    err_pred_loss,
    err_target,
    joint_loss,
    kl_diag_gaussian,
    seg_loss,
    vae_loss,
)
from errornet.utils.errors import NumericalError, UsageError


def loop_bce(s: np.ndarray, g: np.ndarray, fov: np.ndarray) -> float:
    total, count = 0.0, 0
    for idx in np.ndindex(s.shape):
        if fov[idx] <= 0:
            continue
        p = min(max(float(s[idx]), PROB_CLAMP), 1.0 - PROB_CLAMP)
        y = float(g[idx])
        total += -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))
        count += 1
    return total / count


def loop_kl(mu: np.ndarray, log_var: np.ndarray) -> float:
    total = 0.0
    for idx in np.ndindex(mu.shape):
        m, lv = float(mu[idx]), float(log_var[idx])
        total += 0.5 * (m * m + math.exp(lv) - lv - 1.0)
    return total / mu.shape[0]


def loop_mse(a: np.ndarray, b: np.ndarray) -> float:
    return sum((float(a[i]) - float(b[i])) ** 2 for i in np.ndindex(a.shape)) / a.size


class TestSegLoss(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_bce_matches_loop_oracle(self):
        with precision(np.float64):
            for _ in range(5):
                s = self.rng.uniform(0.0, 1.0, size=(2, 1, 6, 6))
                s[0, 0, 0, 0] = 0.0  # exercises the clamp
                g = (self.rng.uniform(size=s.shape) > 0.5).astype(np.float64)
                fov = (self.rng.uniform(size=s.shape) > 0.3).astype(np.float64)
                loss = seg_loss(Tensor(s), g, fov)
                self.assertAlmostEqual(loss.scalar, loop_bce(s, g, fov), delta=1e-6)

    def test_mse_variant_averages_over_fov(self):
        with precision(np.float64):
            s = self.rng.uniform(size=(1, 1, 4, 4))
            g = np.zeros_like(s)
            fov = np.zeros_like(s)
            fov[..., :2, :] = 1.0
            loss = seg_loss(Tensor(s), g, fov, kind="mse")
            expected = float((s[..., :2, :] ** 2).mean())
            self.assertAlmostEqual(loss.scalar, expected, delta=1e-9)

    def test_perfect_prediction_is_near_zero(self):
        g = np.zeros((1, 1, 4, 4))
        g[..., 1, :] = 1.0
        loss = seg_loss(Tensor(g), g)
        self.assertLess(loss.scalar, 1e-5)

    def test_empty_fov_rejected(self):
        s = Tensor(np.full((1, 1, 4, 4), 0.5))
        with self.assertRaises(UsageError):
            seg_loss(s, np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 4)))

    def test_shape_mismatch_rejected(self):
        with self.assertRaises(DimensionError):
            seg_loss(Tensor(np.full((1, 1, 4, 4), 0.5)), np.zeros((1, 1, 4, 5)))

    def test_unknown_kind_rejected(self):
        with self.assertRaises(UsageError):
            seg_loss(Tensor(np.full((1, 1, 2, 2), 0.5)), np.zeros((1, 1, 2, 2)), kind="dice")

    def test_gradient_reaches_probabilities(self):
        s = Tensor(np.full((1, 1, 2, 2), 0.3), requires_grad=True)
        backward(seg_loss(s, np.ones((1, 1, 2, 2))).total)
        self.assertTrue(np.all(s.grad < 0))


class TestKl(unittest.TestCase):
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        with precision(np.float64):
            mu = rng.normal(size=(3, 8))
            log_var = rng.normal(scale=0.5, size=(3, 8))
            loss = kl_diag_gaussian(Tensor(mu), Tensor(log_var))
            self.assertAlmostEqual(loss.scalar, loop_kl(mu, log_var), delta=1e-6)

    def test_standard_normal_has_zero_kl(self):
        loss = kl_diag_gaussian(Tensor(np.zeros((2, 5))), Tensor(np.zeros((2, 5))))
        self.assertAlmostEqual(loss.scalar, 0.0, places=7)

    def test_matches_monte_carlo_estimate(self):
        rng = np.random.default_rng(2)
        samples = 1_000_000
        for _ in range(10):
            mu = rng.normal(size=(1, 1))
            log_var = rng.uniform(-1.0, 1.0, size=(1, 1))
            analytic = kl_diag_gaussian(Tensor(mu), Tensor(log_var)).scalar
            sigma = math.exp(0.5 * float(log_var[0, 0]))
            z = float(mu[0, 0]) + sigma * rng.standard_normal(samples)
            log_q = -0.5 * (((z - float(mu[0, 0])) / sigma) ** 2) - math.log(sigma)
            log_p = -0.5 * z**2
            estimate = float(np.mean(log_q - log_p))
            self.assertLess(abs(estimate - analytic), 0.02 * max(analytic, 0.05))


class TestVaeLoss(unittest.TestCase):
    def test_is_reconstruction_plus_weighted_kl(self):
        rng = np.random.default_rng(3)
        with precision(np.float64):
            s_hat = rng.uniform(size=(2, 1, 4, 4))
            s = rng.uniform(size=(2, 1, 4, 4))
            mu, log_var = rng.normal(size=(2, 6)), rng.normal(scale=0.3, size=(2, 6))
            loss = vae_loss(Tensor(s_hat), Tensor(s), Tensor(mu), Tensor(log_var), kl_weight=0.5)
            expected = loop_mse(s_hat, s) + 0.5 * loop_kl(mu, log_var)
            self.assertAlmostEqual(loss.scalar, expected, delta=1e-6)
            self.assertAlmostEqual(loss.components["recon"], loop_mse(s_hat, s), delta=1e-6)

    def test_no_gradient_into_target(self):
        s = Tensor(np.full((1, 1, 2, 2), 0.5), requires_grad=True)
        s_hat = Tensor(np.full((1, 1, 2, 2), 0.2), requires_grad=True)
        mu = Tensor(np.zeros((1, 2)), requires_grad=True)
        log_var = Tensor(np.zeros((1, 2)), requires_grad=True)
        backward(vae_loss(s_hat, s, mu, log_var).total)
        self.assertIsNone(s.grad)
        self.assertIsNotNone(s_hat.grad)


class TestErrorTargets(unittest.TestCase):
    def test_signed_target_recovers_ground_truth(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            s = rng.uniform(size=(1, 8, 8)).astype(np.float32)
            g = (rng.uniform(size=(1, 8, 8)) > 0.6).astype(np.float32)
            e = err_target(s, g, "signed").data
            corrected = np.clip(s + e, 0.0, 1.0)
            np.testing.assert_array_equal(corrected >= 0.5, g > 0)

    def test_squared_target_is_non_negative(self):
        s = np.array([[0.2, 0.9]], dtype=np.float32)
        g = np.array([[1.0, 0.0]], dtype=np.float32)
        np.testing.assert_allclose(err_target(s, g, "squared").data, [[0.64, 0.81]], rtol=1e-6)

    def test_unknown_mode_rejected(self):
        with self.assertRaises(UsageError):
            err_target(np.zeros((1, 2)), np.zeros((1, 2)), "absolute")

    def test_err_pred_loss_matches_loop(self):
        rng = np.random.default_rng(5)
        with precision(np.float64):
            a, b = rng.normal(size=(2, 1, 3, 3)), rng.normal(size=(2, 1, 3, 3))
            self.assertAlmostEqual(
                err_pred_loss(Tensor(a), Tensor(b)).scalar, loop_mse(a, b), delta=1e-6
            )


class TestJointLoss(unittest.TestCase):
    def test_weights_apply_to_each_term(self):
        pred = err_pred_loss(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 2, 2))))
        seg = seg_loss(Tensor(np.full((1, 1, 2, 2), 0.5)), np.ones((1, 1, 2, 2)), kind="mse")
        loss = joint_loss(pred, seg, pred_weight=2.0, seg_weight=0.5)
        self.assertAlmostEqual(loss.scalar, 2.0 * 1.0 + 0.5 * 0.25, places=6)
        self.assertEqual(set(loss.components), {"pred", "seg"})

    def test_non_finite_loss_raises(self):
        with self.assertRaises(NumericalError):
            err_pred_loss(Tensor(np.array([[np.inf]])), Tensor(np.array([[0.0]])))


if __name__ == "__main__":
    unittest.main()
