"""Spatio-temporal attention network scoring N stocks from a (T, N, F) window.

Pipeline: affine projection F->D per (timestep, stock); sinusoidal positional
encoding along the lookback axis; n_layers encoder layers, each a temporal
self-attention block (over T, independently per stock) followed by a spatial
self-attention block (over N, independently per timestep), with pre-norm
residual attention + feed-forward sublayers; a final normalization; per-head
learned-query attention pooling over time; affine decode D->1.

Everything runs in float64 with explicit hand-derived gradients so the whole
parameter space can be verified against central finite differences. The stock
axis carries no positional information, making the network permutation
equivariant across stocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses as losses_mod

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    """Shape hyperparameters of the network."""

    d_model: int = 32
    n_layers: int = 1
    n_heads: int = 2
    d_ff: int = 64
    dropout: float = 0.0
    lookback: int = 20
    n_features: int = 2

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_heads", "d_ff", "lookback", "n_features"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model not divisible by n_heads ({self.d_model} % {self.n_heads} != 0)"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class ModelParams:
    """Named parameter tensors plus the set of non-trainable names."""

    tensors: dict[str, np.ndarray]
    frozen: frozenset[str] = frozenset()

    def trainable_items(self):
        return [(k, v) for k, v in self.tensors.items() if k not in self.frozen]

    def n_trainable(self) -> int:
        return sum(v.size for k, v in self.trainable_items())

    def copy(self) -> "ModelParams":
        return ModelParams(
            tensors={k: v.copy() for k, v in self.tensors.items()}, frozen=self.frozen
        )

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]


@dataclass(frozen=True)
class ForwardTrace:
    """Predictions for the N stocks, plus cached intermediates for backprop."""

    predictions: np.ndarray
    cache: dict | None = field(default=None, repr=False)


def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos positional table of shape (length, dim)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / dim)
    table = np.empty((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


def _sublayer_names(layer: int) -> dict[str, str]:
    base = f"layers.{layer}"
    return {
        "ln_t": f"{base}.ln_t",
        "attn_t": f"{base}.attn_t",
        "ln_tf": f"{base}.ln_tf",
        "ffn_t": f"{base}.ffn_t",
        "ln_s": f"{base}.ln_s",
        "attn_s": f"{base}.attn_s",
        "ln_sf": f"{base}.ln_sf",
        "ffn_s": f"{base}.ffn_s",
    }


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Deterministic initialization: uniform fan-in-scaled weights, zero biases,
    unit layer-norm gains, fixed sinusoidal positional table (non-trainable)."""
    rng = np.random.default_rng(seed)
    d, h, dff = config.d_model, config.n_heads, config.d_ff
    dh = config.head_dim
    t = {}

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    t["input_proj.w"] = uniform(config.n_features, (config.n_features, d))
    t["input_proj.b"] = np.zeros(d)
    t["pos_enc"] = sinusoidal_encoding(config.lookback, d)
    for layer in range(config.n_layers):
        names = _sublayer_names(layer)
        for attn in (names["attn_t"], names["attn_s"]):
            for w in ("wq", "wk", "wv", "wo"):
                t[f"{attn}.{w}"] = uniform(d, (d, d))
            for b in ("bq", "bk", "bv", "bo"):
                t[f"{attn}.{b}"] = np.zeros(d)
        for ffn in (names["ffn_t"], names["ffn_s"]):
            t[f"{ffn}.w1"] = uniform(d, (d, dff))
            t[f"{ffn}.b1"] = np.zeros(dff)
            t[f"{ffn}.w2"] = uniform(dff, (dff, d))
            t[f"{ffn}.b2"] = np.zeros(d)
        for ln in (names["ln_t"], names["ln_tf"], names["ln_s"], names["ln_sf"]):
            t[f"{ln}.g"] = np.ones(d)
            t[f"{ln}.b"] = np.zeros(d)
    t["ln_out.g"] = np.ones(d)
    t["ln_out.b"] = np.zeros(d)
    t["agg.q"] = uniform(dh, (h, dh))
    t["decoder.w"] = uniform(d, (d,))
    t["decoder.b"] = np.zeros(1)
    return ModelParams(tensors=t, frozen=frozenset({"pos_enc"}))


# ---------------------------------------------------------------------------
# building blocks (forward + mirrored backward)
# ---------------------------------------------------------------------------

def _gelu(u):
    inner = np.tanh(_GELU_C * (u + _GELU_A * u**3))
    return 0.5 * u * (1.0 + inner)


def _gelu_prime(u):
    th = np.tanh(_GELU_C * (u + _GELU_A * u**3))
    return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * u * u)


def _layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * istd
    return g * xhat + b, (xhat, istd, g)


def _layernorm_bwd(dy, cache):
    xhat, istd, g = cache
    batch_axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=batch_axes)
    db = dy.sum(axis=batch_axes)
    dxhat = dy * g
    dx = istd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _dropout_mask(rng, shape, p):
    return (rng.random(shape) >= p) / (1.0 - p)


def _softmax(s, axis):
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _mha_fwd(a, p, prefix, n_heads, drop_p, rng):
    """Multi-head self-attention on (B, L, D); attends over the L axis."""
    B, L, D = a.shape
    dh = D // n_heads
    scale = 1.0 / math.sqrt(dh)
    q = a @ p[f"{prefix}.wq"] + p[f"{prefix}.bq"]
    k = a @ p[f"{prefix}.wk"] + p[f"{prefix}.bk"]
    v = a @ p[f"{prefix}.wv"] + p[f"{prefix}.bv"]
    qh = q.reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)
    kh = k.reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)
    vh = v.reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)
    s = (qh @ kh.swapaxes(-1, -2)) * scale
    prob = _softmax(s, axis=-1)
    mask = None
    pd = prob
    if rng is not None and drop_p > 0.0:
        mask = _dropout_mask(rng, prob.shape, drop_p)
        pd = prob * mask
    o = pd @ vh
    oc = o.transpose(0, 2, 1, 3).reshape(B, L, D)
    out = oc @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]
    cache = (a, qh, kh, vh, prob, mask, pd, oc, scale)
    return out, cache


def _mha_bwd(dout, cache, p, prefix, grads):
    a, qh, kh, vh, prob, mask, pd, oc, scale = cache
    B, L, D = a.shape
    n_heads, dh = qh.shape[1], qh.shape[3]
    grads[f"{prefix}.wo"] += oc.reshape(-1, D).T @ dout.reshape(-1, D)
    grads[f"{prefix}.bo"] += dout.sum(axis=(0, 1))
    doc = dout @ p[f"{prefix}.wo"].T
    do = doc.reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)
    dpd = do @ vh.swapaxes(-1, -2)
    dvh = pd.swapaxes(-1, -2) @ do
    dprob = dpd if mask is None else dpd * mask
    ds = prob * (dprob - (dprob * prob).sum(axis=-1, keepdims=True))
    dqh = (ds @ kh) * scale
    dkh = (ds.swapaxes(-1, -2) @ qh) * scale
    dq = dqh.transpose(0, 2, 1, 3).reshape(B, L, D)
    dk = dkh.transpose(0, 2, 1, 3).reshape(B, L, D)
    dv = dvh.transpose(0, 2, 1, 3).reshape(B, L, D)
    a2 = a.reshape(-1, D)
    grads[f"{prefix}.wq"] += a2.T @ dq.reshape(-1, D)
    grads[f"{prefix}.bq"] += dq.sum(axis=(0, 1))
    grads[f"{prefix}.wk"] += a2.T @ dk.reshape(-1, D)
    grads[f"{prefix}.bk"] += dk.sum(axis=(0, 1))
    grads[f"{prefix}.wv"] += a2.T @ dv.reshape(-1, D)
    grads[f"{prefix}.bv"] += dv.sum(axis=(0, 1))
    da = dq @ p[f"{prefix}.wq"].T + dk @ p[f"{prefix}.wk"].T + dv @ p[f"{prefix}.wv"].T
    return da


def _ffn_fwd(a, p, prefix, drop_p, rng):
    u = a @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"]
    act = _gelu(u)
    mask = None
    actd = act
    if rng is not None and drop_p > 0.0:
        mask = _dropout_mask(rng, act.shape, drop_p)
        actd = act * mask
    out = actd @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]
    return out, (a, u, mask, actd)


def _ffn_bwd(dout, cache, p, prefix, grads):
    a, u, mask, actd = cache
    dff = actd.shape[-1]
    d = a.shape[-1]
    grads[f"{prefix}.w2"] += actd.reshape(-1, dff).T @ dout.reshape(-1, d)
    grads[f"{prefix}.b2"] += dout.sum(axis=(0, 1))
    dactd = dout @ p[f"{prefix}.w2"].T
    dact = dactd if mask is None else dactd * mask
    du = dact * _gelu_prime(u)
    grads[f"{prefix}.w1"] += a.reshape(-1, d).T @ du.reshape(-1, dff)
    grads[f"{prefix}.b1"] += du.sum(axis=(0, 1))
    return du @ p[f"{prefix}.w1"].T


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def forward(params: ModelParams, config: ModelConfig, x, *, dropout_rng=None,
            want_cache: bool = False) -> ForwardTrace:
    """Score the N stocks of one window; optionally cache intermediates.

    `x` must have shape (lookback, N, n_features) and be finite. When
    `dropout_rng` is None (the deterministic path) no dropout is applied.
    """
    x = np.asarray(x, dtype=np.float64)
    T, F = config.lookback, config.n_features
    if x.ndim != 3 or x.shape[0] != T or x.shape[2] != F:
        raise ValueError(
            f"input shape {x.shape} does not match (lookback={T}, N, n_features={F})"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("input window contains non-finite values")
    p = params.tensors
    drop = config.dropout
    rng = dropout_rng

    h = x @ p["input_proj.w"] + p["input_proj.b"]          # (T, N, D)
    h = h + p["pos_enc"][:, None, :]
    layer_caches = []
    for layer in range(config.n_layers):
        names = _sublayer_names(layer)
        cache = {}
        # temporal block: sequence axis T, batch axis N
        a, cache["ln_t"] = _layernorm_fwd(h, p[f"{names['ln_t']}.g"], p[f"{names['ln_t']}.b"])
        at = np.ascontiguousarray(a.transpose(1, 0, 2))    # (N, T, D)
        ot, cache["attn_t"] = _mha_fwd(at, p, names["attn_t"], config.n_heads, drop, rng)
        h = h + ot.transpose(1, 0, 2)
        a, cache["ln_tf"] = _layernorm_fwd(h, p[f"{names['ln_tf']}.g"], p[f"{names['ln_tf']}.b"])
        of, cache["ffn_t"] = _ffn_fwd(a, p, names["ffn_t"], drop, rng)
        h = h + of
        # spatial block: sequence axis N, batch axis T
        a, cache["ln_s"] = _layernorm_fwd(h, p[f"{names['ln_s']}.g"], p[f"{names['ln_s']}.b"])
        os_, cache["attn_s"] = _mha_fwd(a, p, names["attn_s"], config.n_heads, drop, rng)
        h = h + os_
        a, cache["ln_sf"] = _layernorm_fwd(h, p[f"{names['ln_sf']}.g"], p[f"{names['ln_sf']}.b"])
        of, cache["ffn_s"] = _ffn_fwd(a, p, names["ffn_s"], drop, rng)
        h = h + of
        layer_caches.append(cache)

    z, ln_out_cache = _layernorm_fwd(h, p["ln_out.g"], p["ln_out.b"])
    n_heads, dh = config.n_heads, config.head_dim
    scale = 1.0 / math.sqrt(dh)
    zh = z.reshape(T, x.shape[1], n_heads, dh)
    scores = np.einsum("tnhd,hd->tnh", zh, p["agg.q"]) * scale
    prob = _softmax(scores, axis=0)                        # over time, per stock/head
    agg_mask = None
    pd = prob
    if rng is not None and drop > 0.0:
        agg_mask = _dropout_mask(rng, prob.shape, drop)
        pd = prob * agg_mask
    pooled = np.einsum("tnh,tnhd->nhd", pd, zh)
    zcat = pooled.reshape(x.shape[1], config.d_model)
    yhat = zcat @ p["decoder.w"] + p["decoder.b"][0]

    cache = None
    if want_cache:
        cache = {
            "x": x,
            "layers": layer_caches,
            "ln_out": ln_out_cache,
            "zh": zh,
            "prob": prob,
            "pd": pd,
            "agg_mask": agg_mask,
            "zcat": zcat,
            "scale": scale,
        }
    return ForwardTrace(predictions=yhat, cache=cache)


def backward(params: ModelParams, config: ModelConfig, cache: dict,
             dpred: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(dpred * predictions) for every trainable tensor."""
    p = params.tensors
    grads = {k: np.zeros_like(v) for k, v in params.trainable_items()}
    T = config.lookback
    n_heads, dh = config.n_heads, config.head_dim
    N = cache["zcat"].shape[0]

    # decoder
    grads["decoder.w"] += cache["zcat"].T @ dpred
    grads["decoder.b"] += np.array([dpred.sum()])
    dzcat = np.outer(dpred, p["decoder.w"])

    # aggregation
    zh, prob, pd = cache["zh"], cache["prob"], cache["pd"]
    dpooled = dzcat.reshape(N, n_heads, dh)
    dpd = np.einsum("nhd,tnhd->tnh", dpooled, zh)
    dzh = pd[..., None] * dpooled[None, :, :, :]
    dprob = dpd if cache["agg_mask"] is None else dpd * cache["agg_mask"]
    dscores = prob * (dprob - (dprob * prob).sum(axis=0, keepdims=True))
    grads["agg.q"] += np.einsum("tnh,tnhd->hd", dscores, zh) * cache["scale"]
    dzh += dscores[..., None] * p["agg.q"][None, None, :, :] * cache["scale"]
    dz = dzh.reshape(T, N, config.d_model)

    dh_, dg, db = _layernorm_bwd(dz, cache["ln_out"])
    grads["ln_out.g"] += dg
    grads["ln_out.b"] += db

    for layer in reversed(range(config.n_layers)):
        names = _sublayer_names(layer)
        lc = cache["layers"][layer]
        # spatial FFN sublayer
        da = _ffn_bwd(dh_, lc["ffn_s"], p, names["ffn_s"], grads)
        dx, dg, db = _layernorm_bwd(da, lc["ln_sf"])
        grads[f"{names['ln_sf']}.g"] += dg
        grads[f"{names['ln_sf']}.b"] += db
        dh_ = dh_ + dx
        # spatial attention sublayer
        da = _mha_bwd(dh_, lc["attn_s"], p, names["attn_s"], grads)
        dx, dg, db = _layernorm_bwd(da, lc["ln_s"])
        grads[f"{names['ln_s']}.g"] += dg
        grads[f"{names['ln_s']}.b"] += db
        dh_ = dh_ + dx
        # temporal FFN sublayer
        da = _ffn_bwd(dh_, lc["ffn_t"], p, names["ffn_t"], grads)
        dx, dg, db = _layernorm_bwd(da, lc["ln_tf"])
        grads[f"{names['ln_tf']}.g"] += dg
        grads[f"{names['ln_tf']}.b"] += db
        dh_ = dh_ + dx
        # temporal attention sublayer (operates on the (N, T, D) view)
        dot = np.ascontiguousarray(dh_.transpose(1, 0, 2))
        da_t = _mha_bwd(dot, lc["attn_t"], p, names["attn_t"], grads)
        dx, dg, db = _layernorm_bwd(da_t.transpose(1, 0, 2), lc["ln_t"])
        grads[f"{names['ln_t']}.g"] += dg
        grads[f"{names['ln_t']}.b"] += db
        dh_ = dh_ + dx

    # input projection (positional table is fixed; its gradient is discarded)
    x = cache["x"]
    F = config.n_features
    grads["input_proj.w"] += x.reshape(-1, F).T @ dh_.reshape(-1, config.d_model)
    grads["input_proj.b"] += dh_.sum(axis=(0, 1))
    return grads


def forward_backward(params: ModelParams, config: ModelConfig, x, y,
                     spec: losses_mod.LossSpec, *, dropout_rng=None):
    """Loss value and d(loss)/d(theta) for one window under the given loss."""
    trace = forward(params, config, x, dropout_rng=dropout_rng, want_cache=True)
    out = losses_mod.evaluate(trace.predictions, y, spec)
    grads = backward(params, config, trace.cache, out.grad)
    return out.value, grads
