"""Market data ingestion, feature engineering, and sliding-window samples.

Pipeline: per-ticker CSVs -> aligned MarketDataset -> FeaturePanel (daily
return + daily turnover, z-scored per stock on training rows only) ->
WindowSample sequence (lookback tensor plus raw next-day-return target).

All outputs are immutable after construction and safe to share across
threads; every step is pure and single-pass.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError

logger = logging.getLogger(__name__)

N_FEATURES = 2  # channel 0: daily return, channel 1: daily turnover (volume/price)


class DegenerateScalerWarning(UserWarning):
    """A per-stock feature channel had zero variance on the training rows."""


@dataclass(frozen=True)
class MarketDataset:
    """Aligned close/volume panel for a fixed ticker universe.

    `close` and `volume` are (days, N) arrays aligned to `dates` and
    `tickers`; dates are strictly increasing, closes strictly positive.
    """

    tickers: tuple[str, ...]
    dates: tuple[date, ...]
    close: np.ndarray = field(repr=False)
    volume: np.ndarray = field(repr=False)

    def __post_init__(self):
        n_days, n = self.close.shape
        if len(self.tickers) != n or self.volume.shape != (n_days, n):
            raise DataError("close/volume shapes must match tickers and dates")
        if len(self.dates) != n_days:
            raise DataError("dates length must match matrix rows")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing with no duplicates")
        if not np.all(self.close > 0.0):
            raise DataError("non-positive price in dataset")
        if not np.all(self.volume >= 0.0):
            raise DataError("negative volume in dataset")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)


def _read_ticker_csv(path: Path, ticker: str) -> pd.DataFrame:
    if not path.is_file():
        raise DataError(f"missing ticker file: {path}")
    df = pd.read_csv(path)
    expected = ["date", "close", "volume"]
    if list(df.columns) != expected:
        raise DataError(f"{path}: expected columns {expected}, got {list(df.columns)}")
    try:
        df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d").dt.date
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable date: {exc}") from exc
    if df["date"].duplicated().any():
        raise DataError(f"{path}: duplicate dates")
    close = pd.to_numeric(df["close"], errors="coerce")
    volume = pd.to_numeric(df["volume"], errors="coerce")
    if close.isna().any() or volume.isna().any():
        raise DataError(f"{path}: non-numeric close/volume values")
    if (close <= 0.0).any():
        bad = df["date"][close <= 0.0].iloc[0]
        raise DataError(f"{path}: non-positive price on {bad}")
    if (volume < 0.0).any():
        raise DataError(f"{path}: negative volume")
    out = df.assign(close=close.astype(np.float64), volume=volume.astype(np.float64))
    return out.sort_values("date").reset_index(drop=True)


def ingest_csv(directory, tickers) -> MarketDataset:
    """Load `<TICKER>.csv` files and align them on the common date intersection.

    Each file must have the header `date,close,volume` with ISO-8601 dates.
    Tickers keep the supplied order; only dates present for every ticker
    survive.
    """
    directory = Path(directory)
    tickers = tuple(str(t) for t in tickers)
    if not tickers:
        raise DataError("ticker list is empty")
    if not directory.is_dir():
        raise DataError(f"data directory not found: {directory}")

    frames = {t: _read_ticker_csv(directory / f"{t}.csv", t) for t in tickers}
    common = None
    for df in frames.values():
        ds = set(df["date"])
        common = ds if common is None else common & ds
    if not common:
        raise DataError("empty date intersection across tickers")
    dates = tuple(sorted(common))

    n_days, n = len(dates), len(tickers)
    close = np.empty((n_days, n), dtype=np.float64)
    volume = np.empty((n_days, n), dtype=np.float64)
    for j, t in enumerate(tickers):
        df = frames[t].set_index("date")
        close[:, j] = df["close"].reindex(dates).to_numpy()
        volume[:, j] = df["volume"].reindex(dates).to_numpy()
    logger.info("ingested %d tickers over %d aligned days", n, n_days)
    return MarketDataset(tickers=tickers, dates=dates, close=close, volume=volume)


@dataclass(frozen=True)
class SplitPlan:
    """Chronological train/val/test split over window-sample indices.

    Ranges are half-open (start, stop) over anchor (sample) indices. The
    normalizer fit range in feature-panel rows is derived from the train
    range and the lookback: the last training window ends at panel row
    `train[1] + lookback - 2`, so rows strictly before
    `train[1] + lookback - 1` are visible during training.
    """

    lookback: int
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        t, v, s = self.train, self.val, self.test
        if not (0 == t[0] <= t[1] == v[0] <= v[1] == s[0] <= s[1]):
            raise ValueError(f"split ranges must be chronological and contiguous: {t}, {v}, {s}")
        if t[1] - t[0] < 1:
            raise ValueError("training split is empty")

    @property
    def n_samples(self) -> int:
        return self.test[1]

    @property
    def feature_fit_stop(self) -> int:
        """Exclusive stop index (panel rows) for normalizer statistics."""
        return self.train[1] + self.lookback - 1


def plan_splits(n_samples: int, lookback: int, train_frac: float = 0.70,
                val_frac: float = 0.15) -> SplitPlan:
    """Chronological 70/15/15 (by default) split of anchor-date samples.

    Train and validation boundaries round down; the test split takes the
    remainder.
    """
    if n_samples < 3:
        raise ValueError(f"need at least 3 window samples to split, got {n_samples}")
    if train_frac <= 0.0 or val_frac < 0.0 or train_frac + val_frac >= 1.0:
        raise ValueError("split fractions must satisfy 0 < train, 0 <= val, train + val < 1")
    n_train = int(n_samples * train_frac)
    n_val = int(n_samples * val_frac)
    return SplitPlan(
        lookback=lookback,
        train=(0, n_train),
        val=(n_train, n_train + n_val),
        test=(n_train + n_val, n_samples),
    )


class PerStockScaler(TransformerMixin, BaseEstimator):
    """Per-stock, per-channel affine z-score scaler for (rows, N, F) panels.

    Statistics come exclusively from the rows passed to `fit` (the training
    range); channels are normalized independently. Zero-variance channels
    fall back to scale 1 and emit a DegenerateScalerWarning.
    """

    def __init__(self):
        pass

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"expected (rows, N, F) panel, got shape {X.shape}")
        if X.shape[0] < 1:
            raise ValueError("cannot fit scaler on zero rows")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0, ddof=0)
        degenerate = std == 0.0
        self.n_degenerate_ = int(degenerate.sum())
        if self.n_degenerate_:
            warnings.warn(
                f"{self.n_degenerate_} stock/channel pairs have zero training variance; "
                "using scale 1",
                DegenerateScalerWarning,
                stacklevel=2,
            )
            std = np.where(degenerate, 1.0, std)
        self.scale_ = std
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X * self.scale_ + self.mean_


@dataclass(frozen=True)
class FeaturePanel:
    """Normalized feature tensor (rows, N, F) plus the fitted scaler.

    Row r holds the features of trading day r+1 of the source dataset (the
    first day has no return and is dropped). Channel 0 is the daily return,
    channel 1 the daily turnover (volume/price); both are z-scored per stock
    with train-only statistics.
    """

    features: np.ndarray = field(repr=False)
    raw: np.ndarray = field(repr=False)
    dates: tuple[date, ...]
    scaler: PerStockScaler = field(repr=False)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


def build_features(ds: MarketDataset, split: SplitPlan) -> FeaturePanel:
    """Compute raw return/turnover channels and normalize with train-only stats."""
    if ds.n_days < 2:
        raise DataError("need at least 2 days to compute returns")
    returns = (ds.close[1:] - ds.close[:-1]) / ds.close[:-1]
    turnover = ds.volume[1:] / ds.close[1:]
    raw = np.stack([returns, turnover], axis=-1)  # (days-1, N, 2)

    fit_stop = split.feature_fit_stop
    if fit_stop > raw.shape[0]:
        raise DataError(
            f"split needs {fit_stop} feature rows for training but only "
            f"{raw.shape[0]} are available"
        )
    scaler = PerStockScaler().fit(raw[:fit_stop])
    features = scaler.transform(raw)
    return FeaturePanel(features=features, raw=raw, dates=ds.dates[1:], scaler=scaler)


@dataclass(frozen=True)
class WindowSample:
    """One model input: lookback tensor x (T, N, F), raw next-day returns y (N)."""

    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    anchor_date: date


def make_windows(panel: FeaturePanel, ds: MarketDataset, lookback: int) -> list[WindowSample]:
    """Slide a length-T window over the feature panel.

    One sample per panel row with T rows of history ending at it and a raw
    next trading day for the target; the count is panel rows minus T. The
    target is computed from raw closes, never from normalized features:
    y_i = (p_i[t+1] - p_i[t]) / p_i[t] at anchor day t.
    """
    if lookback < 1:
        raise ValueError(f"lookback must be >= 1, got {lookback}")
    n_rows = panel.n_rows
    if n_rows < lookback + 1:
        raise DataError(
            f"insufficient history: {n_rows} feature rows < lookback {lookback} + 1"
        )
    samples = []
    # panel row p corresponds to raw day p + 1
    for p in range(lookback - 1, n_rows - 1):
        raw_day = p + 1
        x = panel.features[p - lookback + 1 : p + 1]
        y = (ds.close[raw_day + 1] - ds.close[raw_day]) / ds.close[raw_day]
        samples.append(WindowSample(x=x, y=y, anchor_date=panel.dates[p]))
    return samples


def prepare_dataset(ds: MarketDataset, lookback: int, train_frac: float = 0.70,
                    val_frac: float = 0.15):
    """Full pipeline: split plan, normalized panel, and window samples.

    Returns (panel, samples, split). The split plan is computed first so the
    feature normalizers can be fit on the training range only.
    """
    n_samples = ds.n_days - 1 - lookback
    if n_samples < 3:
        raise DataError(
            f"dataset with {ds.n_days} days yields {max(n_samples, 0)} window "
            f"samples at lookback {lookback}; need at least 3"
        )
    split = plan_splits(n_samples, lookback, train_frac, val_frac)
    panel = build_features(ds, split)
    samples = make_windows(panel, ds, lookback)
    return panel, samples, split


def split_samples(samples: list[WindowSample], split: SplitPlan):
    """Slice a window-sample list into (train, val, test) per the plan."""
    if len(samples) != split.n_samples:
        raise ValueError(
            f"split plan covers {split.n_samples} samples but {len(samples)} were given"
        )
    tr = samples[split.train[0] : split.train[1]]
    va = samples[split.val[0] : split.val[1]]
    te = samples[split.test[0] : split.test[1]]
    return tr, va, te


def parse_iso_date(text: str) -> date:
    """Strict ISO-8601 (YYYY-MM-DD) date parsing."""
    return datetime.strptime(text, "%Y-%m-%d").date()
