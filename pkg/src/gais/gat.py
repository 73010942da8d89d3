"""Two-layer multi-head graph attention network with hand-written backprop.

Parameters are stacked per layer: ``W`` has shape ``(heads, out_dim, in_dim)``,
``a`` has shape ``(heads, 2 * out_dim)``, the first half scoring the
receiving node and the second half the sending node, and the bias ``b`` added
after aggregation has shape ``(heads, out_dim)``.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidLabel, NonFiniteInput, ShapeError
from .graph import DistanceMetric, Graph, Neighborhoods

NEGATIVE_SLOPE = 0.2
LOG_FLOOR = 1e-12


@dataclass
class GatHyperParams:
    hidden: int = 8
    heads_in: int = 8
    heads_out: int = 2
    dropout: float = 0.1
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    theta_r: float = 0.2
    theta_s: float = 0.7
    theta_c: float = 0.9
    learning_rate: float = 0.005
    epochs: int = 200
    weight_decay: float = 5e-4
    seed: int = 0
    window: int = 8000
    overlap: int | None = None

    def __post_init__(self):
        self.metric = DistanceMetric.parse(self.metric)
        if self.hidden < 1 or self.heads_in < 1 or self.heads_out < 1:
            raise ValueError("hidden, heads_in and heads_out must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        for name in ("theta_r", "theta_s"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.theta_c < 0:
            raise ValueError("theta_c must be non-negative")
        if self.epochs < 1 or self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("epochs >= 1, learning_rate > 0, weight_decay >= 0 required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metric"] = self.metric.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GatHyperParams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class GatModel:
    W1: np.ndarray
    a1: np.ndarray
    W2: np.ndarray
    a2: np.ndarray
    b1: np.ndarray | None = None
    b2: np.ndarray | None = None

    PARAMS = ("W1", "a1", "b1", "W2", "a2", "b2")

    def __post_init__(self):
        if self.b1 is None:
            self.b1 = np.zeros(self.W1.shape[:2])
        if self.b2 is None:
            self.b2 = np.zeros(self.W2.shape[:2])

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        """(p, h, n_in, n_out, C)"""
        n_in, h, p = self.W1.shape
        n_out, C, _ = self.W2.shape
        return p, h, n_in, n_out, C

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAMS}

    def copy(self) -> "GatModel":
        return GatModel(**{k: v.copy() for k, v in self.params().items()})

    @classmethod
    def zeros(cls, p, h, n_in, n_out, C) -> "GatModel":
        return cls(
            W1=np.zeros((n_in, h, p)),
            a1=np.zeros((n_in, 2 * h)),
            W2=np.zeros((n_out, C, h * n_in)),
            a2=np.zeros((n_out, 2 * C)),
        )

    @classmethod
    def glorot(cls, p, h, n_in, n_out, C, rng) -> "GatModel":
        def uniform(shape, fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=shape)

        return cls(
            W1=uniform((n_in, h, p), p, h),
            a1=uniform((n_in, 2 * h), 2 * h, 1),
            W2=uniform((n_out, C, h * n_in), h * n_in, C),
            a2=uniform((n_out, 2 * C), 2 * C, 1),
        )


def leaky_relu(x):
    return np.where(x > 0, x, NEGATIVE_SLOPE * x)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def softmax_rows(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _neighborhoods(graph) -> Neighborhoods:
    return graph.neighborhoods if isinstance(graph, Graph) else graph


def _dropout_mask(shape, rate, rng):
    if rate <= 0 or rng is None:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class _LayerCache:
    nb: Neighborhoods
    W: np.ndarray
    a: np.ndarray
    H_in: np.ndarray
    input_mask: np.ndarray | None
    WH: np.ndarray
    pre: np.ndarray
    alpha: np.ndarray
    attn_mask: np.ndarray | None
    alpha_used: np.ndarray


def _layer(H, nb: Neighborhoods, W, a, b, dropout, rng):
    """All heads of one layer; returns (m, heads, out_dim) before head merging."""
    m = H.shape[0]
    K, o, p = W.shape
    if H.shape[1] != p:
        raise ShapeError(f"layer expects {p} input features, got {H.shape[1]}")
    input_mask = _dropout_mask(H.shape, dropout, rng)
    H_in = H * input_mask if input_mask is not None else H
    WH = np.ascontiguousarray((H_in @ W.reshape(K * o, p).T).reshape(m, K, o))
    pre, alpha = _kernels.attention_scores(WH, np.ascontiguousarray(a), nb.source, nb.indptr)
    attn_mask = _dropout_mask(alpha.shape, dropout, rng)
    alpha_used = alpha * attn_mask if attn_mask is not None else alpha
    out = _kernels.aggregate(alpha_used, WH, nb.source, nb.indptr)
    if b is not None:
        out += b
    return out, _LayerCache(nb, W, a, H_in, input_mask, WH, pre, alpha, attn_mask, alpha_used)


def _layer_backward(d_out, cache: _LayerCache):
    W = cache.W
    K, o, p = W.shape
    m = cache.WH.shape[0]
    use_mask = cache.attn_mask is not None
    mask = cache.attn_mask if use_mask else np.empty((0, K))
    dWH, da = _kernels.attention_backward(
        np.ascontiguousarray(d_out), cache.WH, np.ascontiguousarray(cache.a), cache.pre,
        cache.alpha, cache.alpha_used, mask, use_mask, cache.nb.source, cache.nb.indptr,
    )
    dW = np.einsum("mko,mp->kop", dWH, cache.H_in)
    dH = dWH.reshape(m, K * o) @ W.reshape(K * o, p)
    if cache.input_mask is not None:
        dH = dH * cache.input_mask
    return dW, da, d_out.sum(axis=0), dH


def attention_coefficients(H, graph, W, a, dropout=0.0, train_mode=False, rng=None):
    """Per-edge attention for a single head.

    Returns ``(alpha, neighborhoods)``; ``alpha[e]`` weights the message from
    ``neighborhoods.source[e]`` into ``neighborhoods.target[e]``.
    """
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise NonFiniteInput("node features contain NaN or inf")
    nb = _neighborhoods(graph)
    W = np.asarray(W, dtype=np.float64)[None]
    a = np.asarray(a, dtype=np.float64)[None]
    _, cache = _layer(H, nb, W, a, None, dropout if train_mode else 0.0, rng if train_mode else None)
    return cache.alpha_used[:, 0], nb


def gat_layer_forward(H, graph, heads, mode="concat", activation="elu", dropout=0.0, train_mode=False, rng=None):
    """Apply one attention layer given a list of ``(W, a)`` or ``(W, a, b)``
    head parameters."""
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise NonFiniteInput("node features contain NaN or inf")
    W = np.stack([np.asarray(head[0], dtype=np.float64) for head in heads])
    a = np.stack([np.asarray(head[1], dtype=np.float64) for head in heads])
    b = np.stack([np.asarray(head[2], dtype=np.float64) if len(head) > 2 else np.zeros(W.shape[1]) for head in heads])
    if not train_mode:
        dropout, rng = 0.0, None
    out, _ = _layer(H, _neighborhoods(graph), W, a, b, dropout, rng)
    if mode == "concat":
        out = out.reshape(out.shape[0], -1)
    elif mode == "average":
        out = out.mean(axis=1)
    else:
        raise ValueError(f"unknown head merge mode {mode!r}")
    if activation == "elu":
        return elu(out)
    if activation in (None, "none"):
        return out
    raise ValueError(f"unknown activation {activation!r}")


def _forward(X, graph, model: GatModel, dropout, rng):
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("node features contain NaN or inf")
    nb = _neighborhoods(graph)
    m = X.shape[0]
    out1, cache1 = _layer(X, nb, model.W1, model.a1, model.b1, dropout, rng)
    pre_act = out1.reshape(m, -1)
    hidden = elu(pre_act)
    out2, cache2 = _layer(hidden, nb, model.W2, model.a2, model.b2, dropout, rng)
    Z = out2.mean(axis=1)
    return softmax_rows(Z), (cache1, cache2, pre_act)


def model_forward(X, graph, model: GatModel, dropout=0.0, train_mode=False, rng=None):
    """Class probabilities, one row per node."""
    if not train_mode:
        dropout, rng = 0.0, None
    probs, _ = _forward(X, graph, model, dropout, rng)
    return probs


def _check_labels(labels, C):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise InvalidLabel(f"labels must lie in [0, {C})")
    return labels


def weighted_nll_loss(probs, labels, weights) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, probs.shape[1])
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(labels) or len(labels) != len(probs):
        raise ShapeError("probs, labels and weights must have matching lengths")
    true = np.maximum(probs[np.arange(len(labels)), labels], LOG_FLOOR)
    return float(np.mean(-np.log(true) * weights))


def _backward(model: GatModel, probs, caches, labels, weights):
    cache1, cache2, pre_act = caches
    m, C = probs.shape
    labels = _check_labels(labels, C)
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != m or len(labels) != m:
        raise ShapeError("labels and weights must have one entry per node")
    rows = np.arange(m)
    true = probs[rows, labels]
    loss = float(np.mean(-np.log(np.maximum(true, LOG_FLOOR)) * weights))

    dZ = probs.copy()
    dZ[rows, labels] -= 1.0
    # the log floor is flat, so clamped rows contribute no gradient
    dZ *= (weights * (true >= LOG_FLOOR) / m)[:, None]
    n_out = model.W2.shape[0]
    d_out2 = np.repeat(dZ[:, None, :] / n_out, n_out, axis=1)
    dW2, da2, db2, d_hidden = _layer_backward(d_out2, cache2)
    d_pre = d_hidden * np.where(pre_act > 0, 1.0, np.exp(np.minimum(pre_act, 0.0)))
    dW1, da1, db1, _ = _layer_backward(d_pre.reshape(cache1.WH.shape), cache1)
    return loss, {"W1": dW1, "a1": da1, "b1": db1, "W2": dW2, "a2": da2, "b2": db2}


def loss_and_gradients(model: GatModel, X, graph, labels, weights, dropout=0.0, rng=None):
    """Weighted NLL of a train-mode forward pass and its gradient for every
    parameter; ``weights`` are treated as constants."""
    probs, caches = _forward(X, graph, model, dropout, rng)
    loss, grads = _backward(model, probs, caches, labels, weights)
    return loss, grads, probs


def compute_gradients(model: GatModel, X, graph, labels, weights, dropout=0.0, rng=None):
    _, grads, _ = loss_and_gradients(model, X, graph, labels, weights, dropout, rng)
    return grads


def confidence_scores(probs) -> np.ndarray:
    return np.asarray(probs, dtype=np.float64).max(axis=1)


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params: dict[str, np.ndarray], lr=0.005, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.lr, self.eps, self.weight_decay = lr, eps, weight_decay
        self.beta1, self.beta2 = betas
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * p
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def save_model(model: GatModel, hp: GatHyperParams, path) -> None:
    """Write parameters (with their shapes) and hyperparameters to ``.npz``."""
    header = json.dumps({"hyperparams": hp.to_dict(), "shapes": {k: list(v.shape) for k, v in model.params().items()}})
    with Path(path).open("wb") as fh:
        np.savez(fh, header=np.array(header), **model.params())


def load_model(path) -> tuple[GatModel, GatHyperParams]:
    with np.load(io.BytesIO(Path(path).read_bytes()), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        model = GatModel(**{k: data[k].copy() for k in GatModel.PARAMS})
    for k, shape in header["shapes"].items():
        if list(getattr(model, k).shape) != shape:
            raise ShapeError(f"checkpoint shape mismatch for {k}")
    return model, GatHyperParams.from_dict(header["hyperparams"])
