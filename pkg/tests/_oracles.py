"""Independent reference implementations used as test oracles.

Everything here is written as plainly as possible (explicit double loops,
sequential accumulation) and must stay independent of the production code
paths it checks. Scalar transcendentals go through numpy so both routes share
the same elementary function implementations while differing in enumeration
and reduction strategy.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        up = f(x)
        xf[i] = orig - h
        down = f(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


# ---------------------------------------------------------------------------
# naive loss enumeration
# ---------------------------------------------------------------------------

def naive_descending_ranks(y) -> list[float]:
    """1-based descending ranks with average ranks on ties, one item at a time."""
    ranks = []
    n = len(y)
    for k in range(n):
        greater = 0
        equal = 0
        for j in range(n):
            if y[j] > y[k]:
                greater += 1
            elif y[j] == y[k]:
                equal += 1  # includes self
        ranks.append(greater + (equal + 1.0) / 2.0)
    return ranks


def naive_pairwise_value(yhat, y, kind: str, margin: float = 0.01, scale: float = 1.0) -> float:
    """Double-loop enumeration of a pairwise component value.

    Mirrors the documented term formulas exactly (same operation order) but
    enumerates pairs with explicit Python loops and collects terms in
    lexicographic order before a single reduction. Softplus inputs are
    collected first and transformed as one contiguous array so the
    elementary-function results are bitwise identical to the production
    route on any hardware; the enumeration, signs, ties, ranks, and pair
    counting stay independent.
    """
    n = len(y)
    if kind in ("WHR1", "WHR2"):
        ranks = naive_descending_ranks(y)
        if kind == "WHR1":
            weights = [(n - r + 1.0) / n for r in ranks]
        else:
            weights = list(np.exp(-(np.asarray(ranks, dtype=np.float64) - 1.0) / n))
    terms = []
    softplus_args = []
    for i in range(n):
        for j in range(n):
            if i == j or y[i] == y[j]:
                continue
            s = 1.0 if y[i] > y[j] else -1.0
            d = yhat[i] - yhat[j]
            if kind in ("Hinge", "Margin"):
                terms.append(max(0.0, margin - s * d))
            elif kind in ("WHR1", "WHR2"):
                terms.append((weights[i] * weights[j]) * max(0.0, margin - s * d))
            elif kind == "BPR":
                if s > 0.0:
                    softplus_args.append(-d)
            elif kind == "RankNet":
                softplus_args.append(-scale * s * d)
            else:
                raise ValueError(kind)
    if kind in ("BPR", "RankNet"):
        if not softplus_args:
            return 0.0
        x = np.asarray(softplus_args, dtype=np.float64)
        terms_arr = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
        return float(np.sum(terms_arr) / terms_arr.size)
    if not terms:
        return 0.0
    return float(np.sum(np.asarray(terms, dtype=np.float64)) / len(terms))


# ---------------------------------------------------------------------------
# naive rank correlation
# ---------------------------------------------------------------------------

def naive_average_ranks_ascending(values) -> list[float]:
    """Ascending average ranks via sort-and-walk, 1-based."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def naive_spearman(a, b) -> float:
    """Rank both vectors (average ties) then Pearson-correlate the ranks."""
    ra = naive_average_ranks_ascending(list(a))
    rb = naive_average_ranks_ascending(list(b))
    n = len(ra)
    ma = sum(ra) / n
    mb = sum(rb) / n
    cov = sum((ra[i] - ma) * (rb[i] - mb) for i in range(n))
    va = sum((ra[i] - ma) ** 2 for i in range(n))
    vb = sum((rb[i] - mb) ** 2 for i in range(n))
    if va == 0.0 or vb == 0.0:
        return float("nan")
    return cov / float(np.sqrt(va * vb))


# ---------------------------------------------------------------------------
# naive backtest
# ---------------------------------------------------------------------------

def naive_topk(scores, k: int) -> list[int]:
    """Indices of the k largest scores, ties broken by ascending index."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


def naive_backtest(predictions, realized, k: int, risk_free_rate: float = 0.043,
                   trading_days_per_year: int = 252, annualization: str = "geometric") -> dict:
    """Day-by-day reference backtest with sequential compounding."""
    days = len(predictions)
    equity = [1.0]
    daily = []
    holdings = []
    for d in range(days):
        picks = naive_topk(predictions[d], k)
        holdings.append(picks)
        r = float(np.mean(np.asarray([realized[d][i] for i in picks], dtype=np.float64)))
        daily.append(r)
        equity.append(equity[-1] * (1.0 + r))
    cr = equity[-1] / equity[0] - 1.0
    if annualization == "geometric":
        ar = (1.0 + cr) ** (trading_days_per_year / days) - 1.0
    else:
        ar = float(np.mean(np.asarray(daily))) * trading_days_per_year
    if days >= 2:
        av = float(np.std(np.asarray(daily, dtype=np.float64), ddof=1)) * float(
            np.sqrt(trading_days_per_year)
        )
    else:
        av = 0.0
    sr = (ar - risk_free_rate) / av if av > 0.0 else float("nan")
    peak = equity[0]
    mdd = 0.0
    for v in equity:
        if v > peak:
            peak = v
        dd = v / peak - 1.0
        if dd < mdd:
            mdd = dd
    return {
        "equity_curve": equity,
        "daily_returns": daily,
        "holdings": holdings,
        "CR": cr,
        "AR": ar,
        "AV": av,
        "SR": sr,
        "MDD": mdd,
    }
