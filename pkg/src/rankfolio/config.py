"""Run configuration: one strict JSON document per experiment.

Unknown keys are rejected (naming their path) to prevent silently ignored
hyperparameter typos. Parsing is a fixed point: parse -> to_dict -> parse
yields an equal RunConfig.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .backtest import BacktestConfig
from .losses import KIND_PARAMS, LossSpec, canonical_kind
from .model import ModelConfig
from .train import GridSpec, LrSchedule, TrainConfig


@dataclass(frozen=True)
class RunConfig:
    data_directory: str
    tickers: tuple[str, ...]
    train_frac: float
    val_frac: float
    lookback: int
    model: ModelConfig
    loss: LossSpec
    train: TrainConfig
    backtest: BacktestConfig
    output_directory: str
    seed: int
    deterministic: bool
    grid: GridSpec | None = None
    icir_scale_by_sqrt_days: bool = False

    def to_dict(self) -> dict:
        out = {
            "data": {"directory": self.data_directory, "tickers": list(self.tickers)},
            "split": {
                "train": self.train_frac,
                "val": self.val_frac,
                "test": 1.0 - self.train_frac - self.val_frac,
            },
            "lookback": self.lookback,
            "model": {
                "d_model": self.model.d_model,
                "n_layers": self.model.n_layers,
                "n_heads": self.model.n_heads,
                "d_ff": self.model.d_ff,
                "dropout": self.model.dropout,
            },
            "loss": _loss_to_dict(self.loss),
            "train": {
                "max_epochs": self.train.max_epochs,
                "learning_rate": self.train.learning_rate,
                "weight_decay": self.train.weight_decay,
                "batch_size": self.train.batch_size,
                "early_stopping_patience": self.train.early_stopping_patience,
                "lr_schedule": {
                    "kind": self.train.lr_schedule.kind,
                    "factor": self.train.lr_schedule.factor,
                    "patience": self.train.lr_schedule.patience,
                },
            },
            "backtest": {
                "k": self.backtest.k,
                "risk_free_rate": self.backtest.risk_free_rate,
                "trading_days_per_year": self.backtest.trading_days_per_year,
                "annualization": self.backtest.annualization,
            },
            "metrics": {"icir_scale_by_sqrt_days": self.icir_scale_by_sqrt_days},
            "output": {"directory": self.output_directory},
            "seed": self.seed,
            "deterministic": self.deterministic,
        }
        if self.grid is not None:
            out["grid"] = {"axes": {k: list(v) for k, v in self.grid.axes.items()}}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


def _loss_to_dict(spec: LossSpec) -> dict:
    out = {"kind": spec.kind}
    applicable = KIND_PARAMS[spec.kind]
    if "lambda" in applicable:
        out["lambda"] = spec.pairwise_weight
    if "margin" in applicable:
        out["margin"] = spec.margin
    if "scale" in applicable:
        out["scale"] = spec.scale
    if "temperature" in applicable:
        out["temperature"] = spec.temperature
    return out


class _Section:
    """Helper that pops known keys and rejects leftovers by path."""

    def __init__(self, mapping: dict, path: str):
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path}: expected an object")
        self._map = dict(mapping)
        self._path = path

    def take(self, key, default=..., types=None):
        if key in self._map:
            value = self._map.pop(key)
        elif default is not ...:
            value = default
        else:
            raise ConfigError(f"missing required key {self._path}.{key}")
        if types is not None and value is not None and not isinstance(value, types):
            raise ConfigError(
                f"{self._path}.{key}: expected {getattr(types, '__name__', types)}, "
                f"got {type(value).__name__}"
            )
        return value

    def finish(self):
        if self._map:
            extra = sorted(self._map)
            raise ConfigError(f"unknown key {self._path}.{extra[0]}")


_NUMBER = (int, float)


def _parse_loss(raw: dict) -> LossSpec:
    sec = _Section(raw, "loss")
    kind = canonical_kind(sec.take("kind", types=str))
    applicable = KIND_PARAMS[kind]
    kwargs = {}
    for key, attr in (
        ("lambda", "pairwise_weight"),
        ("margin", "margin"),
        ("scale", "scale"),
        ("temperature", "temperature"),
    ):
        if key in sec._map:
            if key not in applicable:
                raise ConfigError(f"loss.{key} does not apply to loss kind {kind!r}")
            value = sec.take(key, types=_NUMBER)
            kwargs[attr] = float(value)
    sec.finish()
    try:
        return LossSpec(kind=kind, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"loss: {exc}") from exc


def parse_config(payload) -> RunConfig:
    """Build a RunConfig from a parsed JSON object, strictly."""
    root = _Section(payload, "config")

    data = _Section(root.take("data"), "data")
    directory = data.take("directory", types=str)
    tickers = data.take("tickers", types=list)
    if not tickers or not all(isinstance(t, str) for t in tickers):
        raise ConfigError("data.tickers must be a non-empty list of strings")
    data.finish()

    split = _Section(root.take("split", default={}), "split")
    train_frac = float(split.take("train", default=0.70, types=_NUMBER))
    val_frac = float(split.take("val", default=0.15, types=_NUMBER))
    test_frac = split.take("test", default=None, types=_NUMBER)
    split.finish()
    if train_frac <= 0 or val_frac < 0 or train_frac + val_frac >= 1:
        raise ConfigError("split fractions must satisfy 0 < train, 0 <= val, train + val < 1")
    if test_frac is not None and abs((1.0 - train_frac - val_frac) - test_frac) > 1e-9:
        raise ConfigError("split.test must equal 1 - train - val when given")

    lookback = root.take("lookback", default=20, types=int)

    model = _Section(root.take("model", default={}), "model")
    try:
        model_config = ModelConfig(
            d_model=model.take("d_model", default=32, types=int),
            n_layers=model.take("n_layers", default=1, types=int),
            n_heads=model.take("n_heads", default=2, types=int),
            d_ff=model.take("d_ff", default=64, types=int),
            dropout=float(model.take("dropout", default=0.0, types=_NUMBER)),
            lookback=lookback,
            n_features=2,
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    model.finish()

    loss_spec = _parse_loss(root.take("loss", default={"kind": "MSE"}))

    train = _Section(root.take("train", default={}), "train")
    lr_sched = _Section(train.take("lr_schedule", default={}), "train.lr_schedule")
    seed = root.take("seed", default=0, types=int)
    deterministic = root.take("deterministic", default=True, types=bool)
    try:
        schedule = LrSchedule(
            kind=lr_sched.take("kind", default="plateau", types=str),
            factor=float(lr_sched.take("factor", default=0.5, types=_NUMBER)),
            patience=lr_sched.take("patience", default=3, types=int),
        )
        lr_sched.finish()
        train_config = TrainConfig(
            max_epochs=train.take("max_epochs", default=50, types=int),
            learning_rate=float(train.take("learning_rate", default=1e-3, types=_NUMBER)),
            weight_decay=float(train.take("weight_decay", default=0.0, types=_NUMBER)),
            batch_size=train.take("batch_size", default=1, types=int),
            early_stopping_patience=train.take("early_stopping_patience", default=5, types=int),
            lr_schedule=schedule,
            seed=seed,
            deterministic=deterministic,
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc
    train.finish()

    grid_raw = root.take("grid", default=None)
    grid = None
    if grid_raw is not None:
        grid_sec = _Section(grid_raw, "grid")
        axes = grid_sec.take("axes", types=dict)
        grid_sec.finish()
        grid = GridSpec(axes={str(k): list(v) for k, v in axes.items()})
        grid.validate_for(loss_spec.kind)

    bt = _Section(root.take("backtest", default={}), "backtest")
    try:
        backtest_config = BacktestConfig(
            k=bt.take("k", default=5, types=int),
            risk_free_rate=float(bt.take("risk_free_rate", default=0.043, types=_NUMBER)),
            trading_days_per_year=bt.take("trading_days_per_year", default=252, types=int),
            annualization=bt.take("annualization", default="geometric", types=str),
        )
    except ValueError as exc:
        raise ConfigError(f"backtest: {exc}") from exc
    bt.finish()

    met = _Section(root.take("metrics", default={}), "metrics")
    icir_scale = met.take("icir_scale_by_sqrt_days", default=False, types=bool)
    met.finish()

    output = _Section(root.take("output", default={}), "output")
    out_dir = output.take("directory", default="runs/out", types=str)
    output.finish()

    root.finish()
    return RunConfig(
        data_directory=directory,
        tickers=tuple(tickers),
        train_frac=train_frac,
        val_frac=val_frac,
        lookback=lookback,
        model=model_config,
        loss=loss_spec,
        train=train_config,
        backtest=backtest_config,
        output_directory=out_dir,
        seed=seed,
        deterministic=deterministic,
        grid=grid,
        icir_scale_by_sqrt_days=icir_scale,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(payload)
