"""Training loop tests: AdamW semantics, early stopping, learnability, grid search."""

import numpy as np
import pytest

from rankfolio.data import MarketDataset, prepare_dataset, split_samples
from rankfolio.errors import ConfigError, TrainingDivergedError
from rankfolio.losses import LossSpec
from rankfolio.model import ModelConfig, init_params
from rankfolio.synth import generate_market
from rankfolio.train import (
    AdamWState,
    GridSpec,
    LrSchedule,
    TrainConfig,
    adamw_step,
    evaluate_loss,
    grid_search,
    train_model,
)

SMALL_MODEL = ModelConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, dropout=0.0,
                          lookback=5, n_features=2)


def _synthetic_splits(n_days=90, lookback=5, seed=3, noise=0.0, n_tickers=8):
    m = generate_market(n_tickers=n_tickers, n_days=n_days, seed=seed, noise=noise)
    ds = MarketDataset(tickers=m.tickers, dates=m.dates, close=m.close, volume=m.volume)
    _, samples, split = prepare_dataset(ds, lookback=lookback)
    return split_samples(samples, split)


class TestAdamW:
    def test_zero_gradient_step_shrinks_weights_by_decay_factor(self):
        params = init_params(SMALL_MODEL, seed=0)
        before = {k: v.copy() for k, v in params.trainable_items()}
        grads = {k: np.zeros_like(v) for k, v in params.trainable_items()}
        state = AdamWState.init(params)
        lr, wd = 0.01, 0.1
        adamw_step(params, grads, state, lr, wd)
        for name, tensor in params.trainable_items():
            np.testing.assert_array_equal(tensor, before[name] * (1.0 - lr * wd))

    def test_frozen_tensors_untouched(self):
        params = init_params(SMALL_MODEL, seed=0)
        pe_before = params["pos_enc"].copy()
        grads = {k: np.ones_like(v) for k, v in params.trainable_items()}
        adamw_step(params, grads, AdamWState.init(params), 0.1, 0.1)
        np.testing.assert_array_equal(params["pos_enc"], pe_before)

    def test_nonzero_gradient_moves_weights(self):
        params = init_params(SMALL_MODEL, seed=0)
        before = params["decoder.w"].copy()
        grads = {k: np.ones_like(v) for k, v in params.trainable_items()}
        adamw_step(params, grads, AdamWState.init(params), 0.01, 0.0)
        assert not np.array_equal(params["decoder.w"], before)


class TestTrainModel:
    def test_learnable_synthetic_beats_constant_baseline(self):
        # noise-free data: next-day return is an exact linear function of the
        # last-day features; the trained MSE must fall below 10% of the
        # constant-predictor baseline (the variance of the validation targets)
        m = generate_market(n_tickers=10, n_days=160, seed=3, noise=0.0)
        ds = MarketDataset(tickers=m.tickers, dates=m.dates, close=m.close, volume=m.volume)
        _, samples, split = prepare_dataset(ds, lookback=8)
        tr, va, _ = split_samples(samples, split)
        cfg = ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32, dropout=0.0,
                          lookback=8, n_features=2)
        tc = TrainConfig(max_epochs=50, learning_rate=0.02, weight_decay=1e-4,
                         batch_size=2, early_stopping_patience=10,
                         lr_schedule=LrSchedule(patience=4), seed=0, deterministic=True)
        result = train_model(cfg, tr, va, LossSpec(kind="MSE"), tc)
        targets = np.concatenate([s.y for s in va])
        baseline = float(np.mean((targets - targets.mean()) ** 2))
        assert result.best_val_loss < 0.10 * baseline

    def test_zero_learning_rate_stops_after_patience(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=20, learning_rate=0.0, batch_size=4,
                         early_stopping_patience=1, seed=0, deterministic=True)
        result = train_model(SMALL_MODEL, tr, va, LossSpec(kind="MSE"), tc)
        assert result.stopped_epoch == 2
        assert len(result.history) == 2

    def test_same_seed_same_first_epoch_loss(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=2, learning_rate=1e-3, batch_size=4,
                         early_stopping_patience=5, seed=7, deterministic=True)
        a = train_model(SMALL_MODEL, tr, va, LossSpec(kind="MSE"), tc)
        b = train_model(SMALL_MODEL, tr, va, LossSpec(kind="MSE"), tc)
        assert a.history[0]["train_loss"] == b.history[0]["train_loss"]

    def test_best_epoch_contract(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=8, learning_rate=5e-3, batch_size=4,
                         early_stopping_patience=8, seed=1, deterministic=True)
        spec = LossSpec(kind="MSE")
        result = train_model(SMALL_MODEL, tr, va, spec, tc)
        recorded = min(h["val_loss"] for h in result.history)
        assert result.best_val_loss == recorded
        reevaluated = evaluate_loss(result.best_params, SMALL_MODEL, va, spec)
        assert abs(reevaluated - result.best_val_loss) < 1e-6

    def test_history_never_exceeds_max_epochs(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=3, learning_rate=1e-3, batch_size=4,
                         early_stopping_patience=10, seed=0, deterministic=True)
        result = train_model(SMALL_MODEL, tr, va, LossSpec(kind="MSE"), tc)
        assert len(result.history) <= 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_diagnostic(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=3, learning_rate=1e200, batch_size=4,
                         early_stopping_patience=5, seed=0, deterministic=True)
        with pytest.raises(TrainingDivergedError, match="non-finite"):
            train_model(SMALL_MODEL, tr, va, LossSpec(kind="MSE"), tc)

    def test_empty_split_rejected(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=1)
        with pytest.raises(ValueError, match="non-empty"):
            train_model(SMALL_MODEL, tr, [], LossSpec(kind="MSE"), tc)


class TestGridSearch:
    def test_single_point_identity(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=2, learning_rate=1e-3, batch_size=4,
                         early_stopping_patience=5, seed=0, deterministic=True)
        grid = GridSpec(axes={"learning_rate": [1e-3]})
        best_result, best_point, board = grid_search(
            grid, SMALL_MODEL, LossSpec(kind="MSE"), tc, tr, va
        )
        assert best_point == {"learning_rate": 1e-3}
        assert len(board) == 1
        assert board[0]["status"] == "ok"
        assert board[0]["val_loss"] == best_result.best_val_loss

    def test_nonzero_learning_rate_wins_on_learnable_data(self):
        m = generate_market(n_tickers=8, n_days=120, seed=5, noise=0.0)
        ds = MarketDataset(tickers=m.tickers, dates=m.dates, close=m.close, volume=m.volume)
        _, samples, split = prepare_dataset(ds, lookback=5)
        tr, va, _ = split_samples(samples, split)
        tc = TrainConfig(max_epochs=6, learning_rate=1e-3, batch_size=4,
                         early_stopping_patience=6, seed=0, deterministic=True)
        grid = GridSpec(axes={"learning_rate": [0.0, 0.01]})
        _, best_point, board = grid_search(
            grid, SMALL_MODEL, LossSpec(kind="MSE"), tc, tr, va
        )
        assert best_point == {"learning_rate": 0.01}
        losses = {row["point"]["learning_rate"]: row["val_loss"] for row in board}
        assert losses[0.01] < losses[0.0]

    def test_inapplicable_axis_rejected(self):
        with pytest.raises(ConfigError, match="does not apply"):
            GridSpec(axes={"temperature": [0.1]}).validate_for("Hinge")

    def test_unknown_axis_rejected(self):
        with pytest.raises(ConfigError, match="unknown grid axis"):
            GridSpec(axes={"n_layers": [1, 2]})

    def test_leaderboard_deterministic(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=2, learning_rate=1e-3, batch_size=4,
                         early_stopping_patience=5, seed=3, deterministic=True)
        grid = GridSpec(axes={"learning_rate": [1e-3, 1e-2], "lambda": [0.2, 0.8]})
        spec = LossSpec(kind="BPR")
        _, _, board_a = grid_search(grid, SMALL_MODEL, spec, tc, tr, va)
        _, _, board_b = grid_search(grid, SMALL_MODEL, spec, tc, tr, va)
        assert board_a == board_b
        assert len(board_a) == 4

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_point_recorded_and_skipped(self):
        tr, va, _ = _synthetic_splits()
        tc = TrainConfig(max_epochs=2, learning_rate=1e-3, batch_size=4,
                         early_stopping_patience=5, seed=0, deterministic=True)
        grid = GridSpec(axes={"learning_rate": [1e-3, 1e200]})
        _, best_point, board = grid_search(
            grid, SMALL_MODEL, LossSpec(kind="MSE"), tc, tr, va
        )
        assert best_point == {"learning_rate": 1e-3}
        statuses = {row["point"]["learning_rate"]: row["status"] for row in board}
        assert statuses[1e-3] == "ok"
        assert statuses[1e200] == "diverged"
