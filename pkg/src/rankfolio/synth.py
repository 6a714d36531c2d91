"""Synthetic market generator for smoke tests and end-to-end checks.

Next-day returns are a linear function of the current day's observable
features plus Gaussian noise: r[t+1] = c_r * r[t] + c_z * z[t] + sigma_n * eps,
where z[t] drives the turnover channel through volume = price * (tau0 + a * z).
After per-stock normalization both drivers are recoverable as affine
transforms of the two feature channels, so the relationship stays linear in
the model's inputs. `noise` sets sigma_n as a multiple of the signal's
stationary standard deviation (0 makes the target exactly linear).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

RETURN_COEF = 0.3     # c_r: weight of the current return in the signal
TURNOVER_COEF = 0.02  # c_z: weight of the latent turnover driver


@dataclass(frozen=True)
class SyntheticMarket:
    tickers: tuple[str, ...]
    dates: tuple[date, ...]
    close: np.ndarray
    volume: np.ndarray


def _business_days(start: date, count: int) -> tuple[date, ...]:
    days = []
    current = start
    while len(days) < count:
        if current.weekday() < 5:
            days.append(current)
        current += timedelta(days=1)
    return tuple(days)


def signal_std(noise: float) -> float:
    """Stationary standard deviation of the linear signal for a noise ratio."""
    denom = 1.0 - RETURN_COEF**2 * (1.0 + noise**2)
    if denom <= 0.0:
        raise ValueError(f"noise ratio {noise} leaves no stationary solution")
    return math.sqrt(TURNOVER_COEF**2 / denom)


def generate_market(n_tickers: int = 12, n_days: int = 320, seed: int = 7,
                    noise: float = 0.3, start: date = date(2020, 1, 2)) -> SyntheticMarket:
    """Build an aligned synthetic close/volume panel."""
    if n_tickers < 1 or n_days < 3:
        raise ValueError("need at least 1 ticker and 3 days")
    rng = np.random.default_rng(seed)
    sigma_s = signal_std(noise)
    sigma_n = noise * sigma_s
    sigma_r = math.sqrt(sigma_s**2 + sigma_n**2)

    p0 = rng.uniform(20.0, 80.0, size=n_tickers)
    tau0 = rng.uniform(800.0, 1200.0, size=n_tickers)
    tau_amp = rng.uniform(80.0, 120.0, size=n_tickers)

    close = np.empty((n_days, n_tickers))
    volume = np.empty((n_days, n_tickers))
    close[0] = p0
    r = rng.normal(0.0, sigma_r, size=n_tickers)
    z = np.clip(rng.normal(0.0, 1.0, size=n_tickers), -4.0, 4.0)
    volume[0] = close[0] * (tau0 + tau_amp * z)
    for t in range(1, n_days):
        signal = RETURN_COEF * r + TURNOVER_COEF * z
        eps = rng.normal(0.0, 1.0, size=n_tickers)
        r = np.clip(signal + sigma_n * eps, -0.2, 0.2)
        close[t] = close[t - 1] * (1.0 + r)
        z = np.clip(rng.normal(0.0, 1.0, size=n_tickers), -4.0, 4.0)
        volume[t] = close[t] * (tau0 + tau_amp * z)

    tickers = tuple(f"SYN{i:02d}" for i in range(n_tickers))
    return SyntheticMarket(
        tickers=tickers, dates=_business_days(start, n_days), close=close, volume=volume
    )


def write_market_csvs(market: SyntheticMarket, directory) -> list[Path]:
    """One `<TICKER>.csv` per ticker with the standard date,close,volume header."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, ticker in enumerate(market.tickers):
        path = directory / f"{ticker}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("date,close,volume\n")
            for i, d in enumerate(market.dates):
                fh.write(
                    f"{d.isoformat()},{float(market.close[i, j])!r},"
                    f"{float(market.volume[i, j])!r}\n"
                )
        paths.append(path)
    return paths


def default_config_dict(data_directory: str, tickers, output_directory: str,
                        seed: int = 0) -> dict:
    """A small ready-to-run configuration for the generated data."""
    return {
        "data": {"directory": str(data_directory), "tickers": list(tickers)},
        "split": {"train": 0.70, "val": 0.15},
        "lookback": 8,
        "model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "dropout": 0.0},
        "loss": {"kind": "MSE"},
        "train": {
            "max_epochs": 30,
            "learning_rate": 0.01,
            "weight_decay": 1e-4,
            "batch_size": 4,
            "early_stopping_patience": 6,
            "lr_schedule": {"kind": "plateau", "factor": 0.5, "patience": 3},
        },
        "backtest": {"k": 3, "risk_free_rate": 0.043, "trading_days_per_year": 252},
        "output": {"directory": str(output_directory)},
        "seed": seed,
        "deterministic": True,
    }
