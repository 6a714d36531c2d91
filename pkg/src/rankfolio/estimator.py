"""Scikit-learn style estimator wrapping the model, loss, and training loop.

`ReturnRanker` exposes the usual fit/predict/get_params/set_params surface so
the ranking model composes with ecosystem tooling (cloning, grid utilities,
pipelines operating on window samples).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import WindowSample
from .losses import LossSpec
from .metrics import spearman_ic
from .model import ModelConfig, forward
from .train import LrSchedule, TrainConfig, train_model


class ReturnRanker(BaseEstimator):
    """Cross-sectional next-day-return ranker.

    Parameters mirror the run-configuration vocabulary: `loss_kind` selects
    one of the eight loss configurations, `loss_lambda`/`loss_margin`/
    `loss_scale`/`loss_temperature` its tunables. `fit` consumes sequences of
    WindowSample; when no validation set is given, the chronological tail
    `val_fraction` of the training sequence is held out for early stopping.
    """

    def __init__(self, d_model=32, n_layers=1, n_heads=2, d_ff=64, dropout=0.0,
                 loss_kind="MSE", loss_lambda=0.5, loss_margin=0.01, loss_scale=1.0,
                 loss_temperature=0.1, learning_rate=1e-3, weight_decay=0.0,
                 batch_size=1, max_epochs=50, patience=5, lr_factor=0.5,
                 lr_patience=3, val_fraction=0.15, seed=0, deterministic=True):
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.dropout = dropout
        self.loss_kind = loss_kind
        self.loss_lambda = loss_lambda
        self.loss_margin = loss_margin
        self.loss_scale = loss_scale
        self.loss_temperature = loss_temperature
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.lr_factor = lr_factor
        self.lr_patience = lr_patience
        self.val_fraction = val_fraction
        self.seed = seed
        self.deterministic = deterministic

    def _loss_spec(self) -> LossSpec:
        return LossSpec(
            kind=self.loss_kind,
            pairwise_weight=self.loss_lambda,
            margin=self.loss_margin,
            scale=self.loss_scale,
            temperature=self.loss_temperature,
        )

    def _model_config(self, sample: WindowSample) -> ModelConfig:
        lookback, _, n_features = sample.x.shape
        return ModelConfig(
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ff=self.d_ff,
            dropout=self.dropout,
            lookback=lookback,
            n_features=n_features,
        )

    def fit(self, X, X_val=None):
        """Train on a sequence of WindowSample; returns self."""
        samples = list(X)
        if not samples:
            raise ValueError("cannot fit on an empty sample sequence")
        if X_val is None:
            n_val = max(1, int(len(samples) * self.val_fraction))
            if len(samples) - n_val < 1:
                raise ValueError("not enough samples to carve out a validation tail")
            val = samples[-n_val:]
            samples = samples[:-n_val]
        else:
            val = list(X_val)
        config = self._model_config(samples[0])
        tc = TrainConfig(
            max_epochs=self.max_epochs,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            early_stopping_patience=self.patience,
            lr_schedule=LrSchedule(kind="plateau", factor=self.lr_factor,
                                   patience=self.lr_patience),
            seed=self.seed,
            deterministic=self.deterministic,
        )
        self.result_ = train_model(config, samples, val, self._loss_spec(), tc)
        self.config_ = config
        self.params_ = self.result_.best_params
        return self

    def predict(self, X) -> np.ndarray:
        """Score one (T, N, F) window into (N,) or a sequence into (days, N)."""
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted")
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return forward(self.params_, self.config_, X).predictions
        rows = []
        for item in X:
            x = item.x if isinstance(item, WindowSample) else np.asarray(item)
            rows.append(forward(self.params_, self.config_, x).predictions)
        return np.stack(rows)

    def score(self, X) -> float:
        """Mean per-day Spearman IC over a sequence of WindowSample."""
        samples = list(X)
        preds = self.predict(samples)
        ics = [spearman_ic(preds[i], samples[i].y) for i in range(len(samples))]
        finite = [v for v in ics if np.isfinite(v)]
        return float(np.mean(finite)) if finite else float("nan")
