"""scikit-learn estimator facade over the volume classifier.

Cnn3dClassifier wraps model building and the ADAM loop behind the familiar
fit/predict/predict_proba surface (get_params/set_params via BaseEstimator),
so the network slots into sklearn pipelines, clone() and cross-validation.
The file-based training protocol (checkpoints, selection, logs) lives in
hfnet.train; this class is the in-memory, array-in/array-out view.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, ShapeError
from .models import ARCH_IDS, build_model
from .train import TrainConfig, run_epochs

__all__ = ["check_volume_batch", "check_binary_target", "Cnn3dClassifier"]


def check_volume_batch(X, n_channels=None, dims=None):
    """Validate a (N, C, D, H, W) batch of volumes; returns it as float32."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 5:
        raise ShapeError(f"expected a 5D (N, C, D, H, W) batch, got ndim={X.ndim}")
    if X.shape[0] < 1:
        raise DataError("empty batch")
    if n_channels is not None and X.shape[1] != n_channels:
        raise ShapeError(f"expected {n_channels} channel(s), got {X.shape[1]}")
    if dims is not None and X.shape[2:] != tuple(dims):
        raise ShapeError(f"expected volume dims {tuple(dims)}, got {X.shape[2:]}")
    if not np.all(np.isfinite(X)):
        raise DataError("batch contains non-finite voxels")
    return X


def check_binary_target(y, n):
    y = np.asarray(y).ravel()
    if y.shape[0] != n:
        raise ShapeError(f"y has {y.shape[0]} entries for {n} volumes")
    classes = np.unique(y)
    if classes.shape[0] != 2:
        raise DataError(f"need exactly 2 classes, got {classes.tolist()}")
    return y, classes


class Cnn3dClassifier(BaseEstimator, ClassifierMixin):
    """Binary 3D-volume classifier (VGG-11-style CNN trained with ADAM).

    Parameters mirror the training protocol: arch selects the single- or
    multi-modality network, width scales channel counts, and batch_size of
    None resolves to the protocol defaults (16 single / 8 fusion).
    X is (N, C, D, H, W) with C=1 for "single" and C=2 (MRI, PET) otherwise.
    """

    def __init__(self, arch="single", width=0.25, epochs=30, batch_size=None,
                 learning_rate=1e-4, dropout_p=0.5, seed=0):
        self.arch = arch
        self.width = width
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.dropout_p = dropout_p
        self.seed = seed

    def _config(self):
        if self.arch not in ARCH_IDS:
            raise DataError(f"arch must be one of {ARCH_IDS}, got {self.arch!r}")
        return TrainConfig(
            arch=self.arch,
            width=self.width,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            dropout_p=self.dropout_p,
            seed=self.seed,
        )

    def fit(self, X, y):
        config = self._config()
        X = check_volume_batch(X, n_channels=1 if self.arch == "single" else 2)
        y, classes = check_binary_target(y, X.shape[0])
        y01 = (y == classes[1]).astype(np.int64)

        model = build_model(
            self.arch, width=self.width, input_dims=X.shape[2:],
            dropout_p=self.dropout_p, seed=self.seed,
        )
        run_epochs(model, X, y01, config)
        self.classes_ = classes
        self.model_ = model
        self.input_dims_ = X.shape[2:]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_volume_batch(X, n_channels=self.model_.in_channels, dims=self.input_dims_)
        out = np.empty((X.shape[0], 2), dtype=np.float64)
        for start in range(0, X.shape[0], 32):
            out[start:start + 32] = self.model_.forward(X[start:start + 32], train=False)
        return out

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[(probs[:, 1] >= 0.5).astype(int)]
