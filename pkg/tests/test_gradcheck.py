"""Finite-difference verification of every layer's backward pass (float64)."""

import numpy as np

from hfnet.nn.gradcheck import grad_check_layer, grad_check_loss
from hfnet.nn.layers import BatchNorm, Conv3d, Dense, Dropout, MaxPool3d, ReLU

RNG = np.random.default_rng(2024)


def test_dense():
    layer = Dense(5, 3, rng=RNG, dtype=np.float64)
    x = RNG.standard_normal((2, 5))
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_conv3d():
    layer = Conv3d(3, 4, 3, rng=RNG, dtype=np.float64)
    x = RNG.standard_normal((2, 3, 5, 5, 4))
    report = grad_check_layer(layer, x, tolerance=1e-4)
    assert report.passed, str(report)


def test_conv3d_k1():
    layer = Conv3d(2, 2, 1, rng=RNG, dtype=np.float64)
    x = RNG.standard_normal((2, 2, 3, 3, 3))
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_batchnorm_train_mode():
    layer = BatchNorm(3, dtype=np.float64)
    x = RNG.standard_normal((4, 3, 2, 2, 2))
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_batchnorm_offcenter_gamma_beta():
    layer = BatchNorm(2, dtype=np.float64)
    layer.gamma.data[...] = (0.5, 2.0)
    layer.beta.data[...] = (-1.0, 3.0)
    x = RNG.standard_normal((5, 2, 3, 2, 2)) * 1.7 + 0.4
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_relu():
    layer = ReLU()
    x = RNG.standard_normal((4, 9))
    x = np.where(np.abs(x) < 0.1, x + 0.5, x)  # keep away from the kink
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_dropout_frozen_mask():
    layer = Dropout(0.4, rng=np.random.default_rng(7))
    x = RNG.standard_normal((3, 8))
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_maxpool_input_gradient():
    layer = MaxPool3d()
    x = RNG.standard_normal((2, 2, 5, 4, 3))
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert report.passed, str(report)


def test_softmax_cross_entropy_gradient():
    logits = RNG.standard_normal((6, 2))
    labels = np.eye(2)[RNG.integers(0, 2, 6)]
    report = grad_check_loss(logits, labels, tolerance=1e-7)
    assert report.passed, str(report)


def test_grad_check_detects_broken_gradient():
    # sanity: the checker must actually fail on a wrong backward pass
    class Broken(Dense):
        def backward(self, dy):
            dx = super().backward(dy)
            self.weight.grad *= 1.01
            return dx

    layer = Broken(4, 3, rng=RNG, dtype=np.float64)
    x = RNG.standard_normal((3, 4))
    report = grad_check_layer(layer, x, tolerance=1e-6)
    assert not report.passed
