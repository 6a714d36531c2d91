"""Cross-sectional stock-return ranking toolkit.

Trains a small spatio-temporal attention network to rank next-day stock
returns under interchangeable loss functions (pointwise, pairwise, listwise),
then evaluates each via a deterministic top-k equal-weight backtest and a
predictive-quality metric suite.
"""

from .errors import ConfigError, DataError, RankfolioError, TrainingDivergedError
from .data import (
    FeaturePanel,
    MarketDataset,
    PerStockScaler,
    SplitPlan,
    WindowSample,
    build_features,
    ingest_csv,
    make_windows,
    plan_splits,
    prepare_dataset,
)
from .losses import (
    LossOutput,
    LossSpec,
    PairSet,
    combined,
    evaluate,
    listnet,
    mse,
    pairwise_component,
    valid_pairs,
)
from .model import (
    ForwardTrace,
    ModelConfig,
    ModelParams,
    forward,
    forward_backward,
    init_params,
)
from .train import GridSpec, TrainConfig, TrainResult, grid_search, train_model
from .backtest import (
    BacktestConfig,
    BacktestResult,
    portfolio_metrics,
    run_backtest,
    select_topk,
    sharpe_ratio,
)
from .metrics import MetricsReport, compute_report, precision_at_k, spearman_ic
from .estimator import ReturnRanker

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig",
    "BacktestResult",
    "ConfigError",
    "DataError",
    "FeaturePanel",
    "ForwardTrace",
    "GridSpec",
    "LossOutput",
    "LossSpec",
    "MarketDataset",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "PairSet",
    "PerStockScaler",
    "RankfolioError",
    "ReturnRanker",
    "SplitPlan",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "WindowSample",
    "build_features",
    "combined",
    "compute_report",
    "evaluate",
    "forward",
    "forward_backward",
    "grid_search",
    "ingest_csv",
    "init_params",
    "listnet",
    "make_windows",
    "mse",
    "pairwise_component",
    "plan_splits",
    "portfolio_metrics",
    "precision_at_k",
    "prepare_dataset",
    "run_backtest",
    "select_topk",
    "sharpe_ratio",
    "spearman_ic",
    "train_model",
    "valid_pairs",
]
