"""Predictive-quality metrics: per-day Spearman IC, ICIR, Precision@k, test MSE.

Undefined quantities (IC on a constant cross-section, ICIR at zero IC spread)
are NaN sentinels; days with undefined IC are excluded from aggregation and
counted in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backtest import select_topk
from .validation import as_matrix, as_vector, check_same_length


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ascending 1-based ranks with tied values sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_ic(yhat, y) -> float:
    """Spearman rank correlation: Pearson correlation of average-tie ranks.

    Returns NaN when either vector is constant (undefined correlation).
    """
    a = as_vector(yhat, "yhat", min_len=2)
    b = as_vector(y, "y", min_len=2)
    check_same_length(a, b)
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    va = float(ra @ ra)
    vb = float(rb @ rb)
    if va == 0.0 or vb == 0.0:
        return float("nan")
    return float((ra @ rb) / np.sqrt(va * vb))


def precision_at_k(yhat, y, k: int) -> float:
    """Fraction of the k top-predicted stocks whose realized return is positive."""
    a = as_vector(yhat, "yhat")
    b = as_vector(y, "y")
    check_same_length(a, b)
    picks = select_topk(a, k)
    return float(np.count_nonzero(b[picks] > 0.0)) / k


@dataclass(frozen=True)
class MetricsReport:
    ic_series: np.ndarray = field(repr=False)  # per day; NaN where undefined
    ic_mean: float
    ic_std: float
    icir: float
    precision_at_k: float
    test_mse: float
    n_days: int
    n_days_excluded: int  # days with undefined (constant cross-section) IC

    def to_dict(self) -> dict:
        def clean(x):
            return None if not np.isfinite(x) else float(x)

        return {
            "ic_mean": clean(self.ic_mean),
            "ic_std": clean(self.ic_std),
            "icir": clean(self.icir),
            "precision_at_k": clean(self.precision_at_k),
            "test_mse": clean(self.test_mse),
            "n_days": self.n_days,
            "n_days_excluded": self.n_days_excluded,
        }


def compute_report(predictions, realized, k: int, *,
                   icir_scale_by_sqrt_days: bool = False) -> MetricsReport:
    """Aggregate per-day metrics over a (days, N) prediction/realized pair.

    ICIR defaults to ic_mean / ic_std; set `icir_scale_by_sqrt_days` to
    multiply by sqrt(defined days) (an alternative convention seen in
    practice).
    """
    preds = as_matrix(predictions, "predictions")
    real = as_matrix(realized, "realized")
    if preds.shape != real.shape:
        raise ValueError(f"shape mismatch: predictions {preds.shape} vs realized {real.shape}")
    days = preds.shape[0]
    ic = np.array([spearman_ic(preds[d], real[d]) for d in range(days)])
    defined = ic[np.isfinite(ic)]
    n_defined = defined.shape[0]
    if n_defined == 0:
        ic_mean = ic_std = icir = float("nan")
    else:
        ic_mean = float(np.mean(defined))
        ic_std = float(np.std(defined, ddof=1)) if n_defined >= 2 else float("nan")
        icir = ic_mean / ic_std if np.isfinite(ic_std) and ic_std > 0.0 else float("nan")
        if icir_scale_by_sqrt_days and np.isfinite(icir):
            icir *= float(np.sqrt(n_defined))
    pk = float(np.mean([precision_at_k(preds[d], real[d], k) for d in range(days)]))
    mse_per_day = np.mean((preds - real) ** 2, axis=1)
    return MetricsReport(
        ic_series=ic,
        ic_mean=ic_mean,
        ic_std=ic_std,
        icir=icir,
        precision_at_k=pk,
        test_mse=float(np.mean(mse_per_day)),
        n_days=days,
        n_days_excluded=days - n_defined,
    )
