"""Loss functions for cross-sectional return ranking.

Eight configurations are supported: pointwise MSE, six combined
pointwise+pairwise losses (Hinge, Margin, BPR, RankNet, and two weighted
hinge variants WHR1/WHR2), and the listwise ListNet loss. Every operation
returns both the scalar value and the analytic gradient with respect to the
predictions, so a finite-difference oracle applies uniformly regardless of
how the surrounding training system differentiates.

Conventions:
  - A "valid pair" is an ordered index pair (i, j), i != j, with y_i != y_j.
    Both orientations are enumerated; ties are excluded.
  - Pairwise components are summed over their pair set and divided by its
    cardinality (for BPR: the count of pairs with y_i > y_j). An empty pair
    set yields value 0 and a zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import as_vector, check_same_length

PAIRWISE_KINDS = ("Hinge", "Margin", "BPR", "RankNet", "WHR1", "WHR2")
ALL_KINDS = ("MSE",) + PAIRWISE_KINDS + ("ListNet",)

# Which tunable parameters apply to which kind (used by config parsing).
KIND_PARAMS = {
    "MSE": frozenset(),
    "Hinge": frozenset({"lambda", "margin"}),
    "Margin": frozenset({"lambda", "margin"}),
    "BPR": frozenset({"lambda"}),
    "RankNet": frozenset({"lambda", "scale"}),
    "WHR1": frozenset({"lambda", "margin"}),
    "WHR2": frozenset({"lambda", "margin"}),
    "ListNet": frozenset({"temperature"}),
}


def canonical_kind(kind: str) -> str:
    """Resolve a (case-insensitive) kind string to its canonical name."""
    by_lower = {k.lower(): k for k in ALL_KINDS}
    key = str(kind).strip().lower()
    if key not in by_lower:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {', '.join(ALL_KINDS)}")
    return by_lower[key]


@dataclass(frozen=True)
class LossSpec:
    """One loss configuration plus its tunable parameters.

    Defaults are sized for daily-return magnitudes (~1e-2). Parameters that
    do not apply to `kind` are ignored at evaluation time; strict rejection
    of inapplicable keys happens at config-parse time.
    """

    kind: str = "MSE"
    pairwise_weight: float = 0.5  # lambda in [0, 1], combined losses only
    margin: float = 0.01          # m >= 0, Hinge/Margin/WHR
    scale: float = 1.0            # alpha > 0, RankNet
    temperature: float = 0.1      # tau > 0, ListNet

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if not 0.0 <= self.pairwise_weight <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.pairwise_weight}")
        if self.margin < 0.0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.scale <= 0.0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @property
    def is_pairwise(self) -> bool:
        return self.kind in PAIRWISE_KINDS


@dataclass(frozen=True)
class PairSet:
    """Ordered valid pairs (i, j) with y_i != y_j and their signs.

    `pairs` is an (P, 2) int array in lexicographic (i, j) order; `signs`
    holds sign(y_i - y_j) per pair. For BPR only the positive-sign
    orientations (y_i > y_j) are used.
    """

    pairs: np.ndarray
    signs: np.ndarray

    def __len__(self) -> int:
        return self.pairs.shape[0]


@dataclass(frozen=True)
class LossOutput:
    """Scalar loss value and its gradient with respect to the predictions."""

    value: float
    grad: np.ndarray = field(repr=False)


def valid_pairs(y) -> PairSet:
    """Enumerate all ordered valid pairs of a target vector.

    Pairs are returned in lexicographic (i, j) order; ties are excluded
    (an all-tied vector yields an empty pair set).
    """
    yv = as_vector(y, "y")
    diff = yv[:, None] - yv[None, :]
    mask = diff != 0.0
    ii, jj = np.nonzero(mask)
    pairs = np.column_stack([ii, jj]).astype(np.int64)
    signs = np.sign(diff[ii, jj])
    return PairSet(pairs=pairs, signs=signs)


def mse(yhat, y) -> LossOutput:
    """Mean squared error: value (1/N) * sum((yhat - y)^2), grad (2/N)(yhat - y)."""
    yh = as_vector(yhat, "yhat")
    yv = as_vector(y, "y")
    check_same_length(yh, yv)
    n = yh.shape[0]
    resid = yh - yv
    value = float(np.sum(resid * resid) / n)
    grad = (2.0 / n) * resid
    return LossOutput(value=value, grad=grad)


def _descending_average_ranks(y: np.ndarray) -> np.ndarray:
    """1-based descending ranks of y (largest value gets rank 1).

    Tied values receive the average of the ranks they span, keeping the
    weighting permutation-equivariant.
    """
    greater = (y[None, :] > y[:, None]).sum(axis=1).astype(np.float64)
    equal = (y[None, :] == y[:, None]).sum(axis=1).astype(np.float64)  # includes self
    return greater + (equal + 1.0) / 2.0


def _whr_weights(y: np.ndarray, kind: str) -> np.ndarray:
    """Per-item rank-based weights in (0, 1] for the weighted hinge variants."""
    n = y.shape[0]
    ranks = _descending_average_ranks(y)
    if kind == "WHR1":
        return (n - ranks + 1.0) / n
    return np.exp(-(ranks - 1.0) / n)


def _stable_logistic(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic sigmoid."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) via the overflow-safe identity max(x, 0) + log1p(exp(-|x|))."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def pairwise_component(yhat, y, spec: LossSpec) -> LossOutput:
    """Pairwise ranking component of a combined loss.

    The component is summed over the applicable pair set in lexicographic
    (i, j) order and divided by the pair count; the weighted variants
    multiply each term by w_i * w_j with rank-based weights.
    """
    if not spec.is_pairwise:
        raise ValueError(f"{spec.kind} is not a pairwise loss kind")
    yh = as_vector(yhat, "yhat")
    yv = as_vector(y, "y")
    check_same_length(yh, yv)
    n = yh.shape[0]
    if n < 2:
        raise ValueError(f"pairwise losses need N >= 2, got N={n}")

    delta = yh[:, None] - yh[None, :]                # yhat_i - yhat_j
    sign = np.sign(yv[:, None] - yv[None, :])        # s_ij; 0 on ties and diagonal
    if spec.kind == "BPR":
        mask = sign > 0.0                            # only y_i > y_j orientations
    else:
        mask = sign != 0.0
    count = int(np.count_nonzero(mask))
    if count == 0:
        return LossOutput(value=0.0, grad=np.zeros(n))

    # term[i, j] and dterm/ddelta[i, j] on the full matrix; masked cells
    # are discarded before summation.
    if spec.kind in ("Hinge", "Margin", "WHR1", "WHR2"):
        core = np.maximum(0.0, spec.margin - sign * delta)
        dcore = np.where(spec.margin - sign * delta > 0.0, -sign, 0.0)
        if spec.kind in ("WHR1", "WHR2"):
            w = _whr_weights(yv, spec.kind)
            wouter = w[:, None] * w[None, :]
            term = wouter * core
            dterm = wouter * dcore
        else:
            term = core
            dterm = dcore
    elif spec.kind == "BPR":
        term = _softplus(-delta)
        dterm = -_stable_logistic(-delta)
    else:  # RankNet
        x = -spec.scale * sign * delta
        term = _softplus(x)
        dterm = -spec.scale * sign * _stable_logistic(x)

    # Row-major boolean selection preserves lexicographic (i, j) order.
    value = float(np.sum(term[mask]) / count)
    coeff = np.where(mask, dterm, 0.0) / count       # d term / d delta_ij
    grad = coeff.sum(axis=1) - coeff.sum(axis=0)     # delta_ij = yhat_i - yhat_j
    return LossOutput(value=value, grad=grad)


def combined(yhat, y, spec: LossSpec) -> LossOutput:
    """Convex combination (1 - lambda) * MSE + lambda * pairwise component."""
    lam = spec.pairwise_weight
    point = mse(yhat, y)
    pair = pairwise_component(yhat, y, spec)
    value = (1.0 - lam) * point.value + lam * pair.value
    grad = (1.0 - lam) * point.grad + lam * pair.grad
    return LossOutput(value=value, grad=grad)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x)
    return shifted - np.log(np.sum(np.exp(shifted)))


def listnet(yhat, y, spec: LossSpec) -> LossOutput:
    """ListNet: cross-entropy between temperature-softmaxed targets and predictions.

    value = -sum_k P_y(k) * log P_yhat(k) with P_x = softmax(x / tau);
    grad = (P_yhat - P_y) / tau. Computed with max-subtraction so large
    scores cannot overflow.
    """
    yh = as_vector(yhat, "yhat")
    yv = as_vector(y, "y")
    check_same_length(yh, yv)
    tau = spec.temperature
    log_p_hat = _log_softmax(yh / tau)
    log_p_true = _log_softmax(yv / tau)
    p_true = np.exp(log_p_true)
    p_hat = np.exp(log_p_hat)
    value = float(-np.sum(p_true * log_p_hat))
    grad = (p_hat - p_true) / tau
    return LossOutput(value=value, grad=grad)


def evaluate(yhat, y, spec: LossSpec) -> LossOutput:
    """Dispatch to the configured loss: MSE, a combined pairwise loss, or ListNet."""
    if spec.kind == "MSE":
        return mse(yhat, y)
    if spec.kind == "ListNet":
        return listnet(yhat, y, spec)
    return combined(yhat, y, spec)
