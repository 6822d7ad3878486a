"""Scikit-learn style wrappers around the fusion models.

X is a 3-D float array (n_subsequences, L, d_a + d_v) with audio columns
first; y is (n_subsequences, L) with per-clip targets in [-1, 1]. fit()
carves a seeded validation split out of X for early stopping (like
MLPRegressor's early_stopping/validation_fraction), predict() returns
clipped per-clip values, and score() reports the concordance correlation
coefficient rather than R^2, since that is the metric these models optimize.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .data import SubSequence
from .metrics import ccc
from .models import predict as _predict_clips
from .optim import TrainConfig
from .training import train


def _check_arrays(X, y, d_a, d_v):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"X must be 3-D (n, L, d_a+d_v), got ndim={X.ndim}")
    n, L, d = X.shape
    if d != d_a + d_v:
        raise ValueError(f"X has {d} feature columns, expected d_a+d_v={d_a + d_v}")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    if y is None:
        return X, None
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n, L):
        raise ValueError(f"y must have shape {(n, L)}, got {y.shape}")
    if not np.isfinite(y).all() or (np.abs(y) > 1.0).any():
        raise ValueError("y must be finite and within [-1, 1]")
    return X, y


class _FusionRegressorBase(BaseEstimator, RegressorMixin):
    _model_kind: str = ""

    def __init__(self, d_a=16, d_v=16, k=None, head_hidden=0,
                 learning_rate=1e-3, optimizer="adam", batch_size=64,
                 dropout=0.5, weight_decay=5e-4, max_epochs=50, patience=5,
                 validation_fraction=0.2, seed=0):
        self.d_a = d_a
        self.d_v = d_v
        self.k = k
        self.head_hidden = head_hidden
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.dropout = dropout
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _subsequences(self, X, y, tag):
        return [
            SubSequence(
                seq_id=f"{tag}-{i:05d}",
                audio=X[i, :, : self.d_a], visual=X[i, :, self.d_a:],
                valence=y[i], arousal=y[i],
            )
            for i in range(X.shape[0])
        ]

    def fit(self, X, y):
        X, y = _check_arrays(X, y, self.d_a, self.d_v)
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        n = X.shape[0]
        n_val = max(1, int(round(n * self.validation_fraction)))
        if n_val >= n:
            raise ValueError(f"not enough sub-sequences ({n}) to hold out validation")
        order = np.random.default_rng(self.seed).permutation(n)
        val_idx, train_idx = order[:n_val], order[n_val:]

        config = TrainConfig(
            learning_rate=self.learning_rate, optimizer=self.optimizer,
            batch_size=self.batch_size, dropout=self.dropout,
            weight_decay=self.weight_decay, max_epochs=self.max_epochs,
            patience=self.patience, seed=self.seed, target="valence",
        )
        self.params_, self.history_ = train(
            self._model_kind,
            self._subsequences(X[train_idx], y[train_idx], "train"),
            self._subsequences(X[val_idx], y[val_idx], "val"),
            config, k=self.k, head_hidden=self.head_hidden,
        )
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                f"This {type(self).__name__} instance is not fitted yet."
            )
        X, _ = _check_arrays(X, None, self.d_a, self.d_v)
        return np.stack([
            _predict_clips(self.params_, X[i, :, : self.d_a], X[i, :, self.d_a:])
            for i in range(X.shape[0])
        ])

    def score(self, X, y):
        """Concordance correlation coefficient over all clips (not R^2)."""
        X, y = _check_arrays(X, y, self.d_a, self.d_v)
        pred = self.predict(X)
        return ccc(pred.ravel(), y.ravel()).rho_c


class JointCrossAttentionRegressor(_FusionRegressorBase):
    """Joint cross-attention fusion over paired audio/visual clip features."""

    _model_kind = "jca"


class CrossAttentionRegressor(_FusionRegressorBase):
    """Cross-attention baseline correlating each modality with the other."""

    _model_kind = "vanilla-ca"


class FeatureConcatRegressor(_FusionRegressorBase):
    """No-attention baseline: a per-clip head over concatenated features."""

    _model_kind = "concat"
