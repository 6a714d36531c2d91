"""Optimization loop and hyperparameter grid search.

One batch is all N stocks of one anchor day (the cross-sectional losses need
the full list); days are shuffled per epoch with a seeded RNG. Validation
loss is computed with dropout off after every epoch; the returned parameters
are those of the best validation epoch, not the last one.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .losses import KIND_PARAMS, LossSpec, evaluate
from .model import ModelConfig, ModelParams, forward, forward_backward, init_params

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

MODEL_GRID_AXES = frozenset({"dropout", "d_model", "d_ff"})
TRAIN_GRID_AXES = frozenset({"learning_rate"})
LOSS_GRID_AXES = frozenset({"lambda", "margin", "scale", "temperature"})
GRID_AXES = MODEL_GRID_AXES | TRAIN_GRID_AXES | LOSS_GRID_AXES


@dataclass(frozen=True)
class LrSchedule:
    """Learning-rate schedule; `plateau` halves on stalled validation loss."""

    kind: str = "plateau"  # "plateau" | "constant"
    factor: float = 0.5
    patience: int = 3

    def __post_init__(self):
        if self.kind not in ("plateau", "constant"):
            raise ValueError(f"unknown lr schedule kind {self.kind!r}")
        if not 0.0 < self.factor <= 1.0:
            raise ValueError(f"lr factor must be in (0, 1], got {self.factor}")
        if self.patience < 1:
            raise ValueError(f"lr patience must be >= 1, got {self.patience}")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 50
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 1  # anchor days per optimizer step
    early_stopping_patience: int = 5
    lr_schedule: LrSchedule = LrSchedule()
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        # zero is allowed so stagnation behaviour is testable
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.early_stopping_patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.early_stopping_patience}")


@dataclass
class AdamWState:
    """Per-tensor first/second moments for decoupled-weight-decay Adam."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: ModelParams) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(t) for k, t in params.trainable_items()},
            v={k: np.zeros_like(t) for k, t in params.trainable_items()},
        )


def adamw_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamWState,
               lr: float, weight_decay: float) -> None:
    """One AdamW update in place.

    Weight decay is decoupled and multiplicative: with a zero gradient each
    weight shrinks by exactly (1 - lr * weight_decay).
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for name, tensor in params.trainable_items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        tensor *= 1.0 - lr * weight_decay
        tensor -= lr * update


@dataclass
class TrainResult:
    best_params: ModelParams = field(repr=False)
    history: list[dict]
    best_epoch: int
    best_val_loss: float
    stopped_epoch: int
    model_config: ModelConfig
    loss_spec: LossSpec
    train_config: TrainConfig

    def to_dict(self) -> dict:
        """JSON-friendly summary (parameters excluded; checkpoint holds them)."""
        return {
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stopped_epoch": self.stopped_epoch,
            "history": self.history,
            "loss_kind": self.loss_spec.kind,
        }


def evaluate_loss(params: ModelParams, config: ModelConfig, samples,
                  spec: LossSpec) -> float:
    """Mean per-day loss over samples, dropout off."""
    total = 0.0
    for s in samples:
        trace = forward(params, config, s.x)
        total += evaluate(trace.predictions, s.y, spec).value
    return total / len(samples)


def train_model(config: ModelConfig, train_samples, val_samples, spec: LossSpec,
                tc: TrainConfig) -> TrainResult:
    """AdamW training with early stopping and validation-loss model selection.

    Raises TrainingDivergedError as soon as a batch loss is non-finite.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation splits must be non-empty")
    children = np.random.SeedSequence(tc.seed).spawn(2)
    shuffle_rng = np.random.default_rng(children[0])
    dropout_rng = None
    if not tc.deterministic and config.dropout > 0.0:
        dropout_rng = np.random.default_rng(children[1])

    params = init_params(config, tc.seed)
    state = AdamWState.init(params)
    lr = tc.learning_rate
    history: list[dict] = []
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    bad_epochs = 0
    sched_bad = 0

    n_train = len(train_samples)
    for epoch in range(1, tc.max_epochs + 1):
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, tc.batch_size):
            batch = order[start : start + tc.batch_size]
            loss_sum = 0.0
            grad_sum: dict[str, np.ndarray] | None = None
            for idx in batch:
                s = train_samples[idx]
                value, grads = forward_backward(
                    params, config, s.x, s.y, spec, dropout_rng=dropout_rng
                )
                loss_sum += value
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for k in grad_sum:
                        grad_sum[k] += grads[k]
            batch_loss = loss_sum / len(batch)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(loss={float(batch_loss)!r}, lr={lr:g})"
                )
            for k in grad_sum:
                grad_sum[k] /= len(batch)
            adamw_step(params, grad_sum, state, lr, tc.weight_decay)
            epoch_loss += loss_sum
        train_loss = epoch_loss / n_train
        val_loss = evaluate_loss(params, config, val_samples, spec)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        )

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            bad_epochs = 0
            sched_bad = 0
        else:
            bad_epochs += 1
            sched_bad += 1
            if tc.lr_schedule.kind == "plateau" and sched_bad >= tc.lr_schedule.patience:
                lr *= tc.lr_schedule.factor
                sched_bad = 0
                logger.info("epoch %d: lr reduced to %g", epoch, lr)
        if bad_epochs >= tc.early_stopping_patience:
            break

    return TrainResult(
        best_params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        stopped_epoch=len(history),
        model_config=config,
        loss_spec=spec,
        train_config=tc,
    )


@dataclass(frozen=True)
class GridSpec:
    """Named candidate lists over model, training, and loss parameters.

    Axis names: dropout, d_model, d_ff, learning_rate, lambda, margin, scale,
    temperature. Loss axes must apply to the loss kind being tuned. Points
    are enumerated as the cartesian product with axes in sorted-name order;
    the enumeration index is the deterministic tie-break.
    """

    axes: dict[str, list]

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("grid must define at least one axis")
        for name, values in self.axes.items():
            if name not in GRID_AXES:
                raise ConfigError(
                    f"unknown grid axis {name!r}; expected one of {sorted(GRID_AXES)}"
                )
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ConfigError(f"grid axis {name!r} must be a non-empty list")

    def validate_for(self, kind: str) -> None:
        applicable = KIND_PARAMS[kind]
        for name in self.axes:
            if name in LOSS_GRID_AXES and name not in applicable:
                raise ConfigError(
                    f"grid axis {name!r} does not apply to loss kind {kind!r}"
                )

    def points(self) -> list[dict]:
        names = sorted(self.axes)
        return [
            dict(zip(names, combo))
            for combo in itertools.product(*(self.axes[n] for n in names))
        ]


def _apply_point(point: dict, config: ModelConfig, spec: LossSpec, tc: TrainConfig):
    model_kw = {k: point[k] for k in point if k in MODEL_GRID_AXES}
    train_kw = {k: point[k] for k in point if k in TRAIN_GRID_AXES}
    loss_kw = {}
    if "lambda" in point:
        loss_kw["pairwise_weight"] = point["lambda"]
    for k in ("margin", "scale", "temperature"):
        if k in point:
            loss_kw[k] = point[k]
    return (
        replace(config, **model_kw) if model_kw else config,
        replace(spec, **loss_kw) if loss_kw else spec,
        replace(tc, **train_kw) if train_kw else tc,
    )


def grid_search(grid: GridSpec, config: ModelConfig, spec: LossSpec, tc: TrainConfig,
                train_samples, val_samples):
    """Train one model per grid point and rank by validation loss.

    Ranking uses each point's own loss function on the validation split;
    ties break by grid-point index. Divergent points are recorded and
    skipped. Returns (best TrainResult, best point dict, leaderboard rows).
    """
    grid.validate_for(spec.kind)
    points = grid.points()
    leaderboard: list[dict] = []
    best: tuple[float, int] | None = None
    best_result: TrainResult | None = None
    best_point: dict | None = None
    for index, point in enumerate(points):
        p_config, p_spec, p_tc = _apply_point(point, config, spec, tc)
        row = {"index": index, "point": dict(point)}
        try:
            result = train_model(p_config, train_samples, val_samples, p_spec, p_tc)
        except TrainingDivergedError as exc:
            logger.warning("grid point %d diverged: %s", index, exc)
            row.update({"status": "diverged", "val_loss": None, "stopped_epoch": None})
            leaderboard.append(row)
            continue
        row.update(
            {
                "status": "ok",
                "val_loss": result.best_val_loss,
                "best_epoch": result.best_epoch,
                "stopped_epoch": result.stopped_epoch,
            }
        )
        leaderboard.append(row)
        key = (result.best_val_loss, index)
        if best is None or key < best:
            best = key
            best_result = result
            best_point = point
    if best_result is None:
        raise TrainingDivergedError("every grid point diverged")
    ranked = sorted(
        leaderboard,
        key=lambda r: (r["status"] != "ok", r["val_loss"] if r["val_loss"] is not None else np.inf, r["index"]),
    )
    return best_result, best_point, ranked
