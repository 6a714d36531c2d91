"""Deterministic daily-rebalanced, long-only, equal-weight top-k backtest.

No transaction costs or slippage; equity compounds multiplicatively from 1.0.
Undefined ratios (e.g. Sharpe at zero volatility) are reported as NaN, the
package-wide sentinel, and serialized as null in JSON outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import as_matrix, as_vector


@dataclass(frozen=True)
class BacktestConfig:
    k: int = 5
    risk_free_rate: float = 0.043          # annualized, decimal
    trading_days_per_year: int = 252
    initial_value: float = 1.0
    annualization: str = "geometric"       # "geometric" | "arithmetic"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.risk_free_rate < 0.0:
            raise ValueError(f"risk_free_rate must be >= 0, got {self.risk_free_rate}")
        if self.trading_days_per_year < 1:
            raise ValueError("trading_days_per_year must be >= 1")
        if self.initial_value <= 0.0:
            raise ValueError("initial_value must be > 0")
        if self.annualization not in ("geometric", "arithmetic"):
            raise ValueError(f"unknown annualization {self.annualization!r}")


@dataclass(frozen=True)
class BacktestResult:
    equity_curve: np.ndarray = field(repr=False)   # (days + 1,), starts at initial_value
    holdings: list = field(repr=False)             # per day: array of k stock indices
    daily_returns: np.ndarray = field(repr=False)  # (days,)
    metrics: dict = field(default_factory=dict)    # CR, AR, AV, SR, MDD


def select_topk(yhat, k: int) -> np.ndarray:
    """Indices of the k largest predictions; ties break by ascending index."""
    scores = as_vector(yhat, "yhat")
    if k > scores.shape[0]:
        raise ValueError(f"k={k} exceeds the number of stocks {scores.shape[0]}")
    order = np.argsort(-scores, kind="stable")
    return order[:k]


def sharpe_ratio(annual_return: float, annual_vol: float, risk_free_rate: float) -> float:
    """(AR - rf) / AV; NaN when volatility is zero."""
    if annual_vol <= 0.0 or not np.isfinite(annual_vol):
        return float("nan")
    return (annual_return - risk_free_rate) / annual_vol


def max_drawdown(equity: np.ndarray) -> float:
    """Largest peak-to-trough relative decline (<= 0) of an equity curve."""
    peaks = np.maximum.accumulate(equity)
    return float(np.min(equity / peaks - 1.0))


def portfolio_metrics(daily_returns, cfg: BacktestConfig) -> dict:
    """CR, AR, AV, SR, MDD from a daily portfolio-return series.

    CR compounds multiplicatively; AR annualizes CR geometrically by default
    (arithmetic mean * trading days as the configurable alternative); AV is
    the sample std (ddof=1) scaled by sqrt(trading days), zero for a single
    day; SR is the annualized arithmetic excess (AR - rf) / AV.
    """
    r = as_vector(daily_returns, "daily_returns")
    days = r.shape[0]
    tdy = cfg.trading_days_per_year
    cr = float(np.prod(1.0 + r) - 1.0)
    if cfg.annualization == "geometric":
        ar = float((1.0 + cr) ** (tdy / days) - 1.0)
    else:
        ar = float(np.mean(r) * tdy)
    av = float(np.std(r, ddof=1) * np.sqrt(tdy)) if days >= 2 else 0.0
    sr = sharpe_ratio(ar, av, cfg.risk_free_rate)
    equity = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    mdd = max_drawdown(equity)
    return {"CR": cr, "AR": ar, "AV": av, "SR": sr, "MDD": mdd}


def run_backtest(predictions, realized, cfg: BacktestConfig) -> BacktestResult:
    """Simulate the top-k equal-weight portfolio over (days, N) matrices.

    Day d holds the k stocks with the highest predictions[d]; its return is
    the mean realized return of those holdings.
    """
    preds = as_matrix(predictions, "predictions")
    real = as_matrix(realized, "realized")
    if preds.shape != real.shape:
        raise ValueError(f"shape mismatch: predictions {preds.shape} vs realized {real.shape}")
    days, n = preds.shape
    if days < 1:
        raise ValueError("need at least one day")
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds the number of stocks {n}")
    if not np.all(np.isfinite(real)):
        raise ValueError("realized returns contain non-finite values")

    holdings = []
    daily = np.empty(days)
    for d in range(days):
        picks = select_topk(preds[d], cfg.k)
        holdings.append(picks)
        daily[d] = np.mean(real[d][picks])
    equity = np.empty(days + 1)
    equity[0] = cfg.initial_value
    equity[1:] = cfg.initial_value * np.cumprod(1.0 + daily)
    metrics = portfolio_metrics(daily, cfg)
    return BacktestResult(
        equity_curve=equity, holdings=holdings, daily_returns=daily, metrics=metrics
    )
