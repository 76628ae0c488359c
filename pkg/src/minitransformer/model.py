"""Attention forward pass: pairwise kernel, transformed values, cumulants,
and the linear output head.

Each observation pair (i, l) gets a log-kernel score combining a content
term (query projection of i times key projection of l) and a temporal-decay
term -(w_dist * |t_i - t_l|)**gamma.  Softmax over the causal prefix l <= i
turns scores into attention weights; the weighted value projections give one
scalar transformed value per head.  Transformed values are mixed into C
cumulants with a horizon decay toward the prediction time, and a linear
head maps cumulants to predictions.

``log_kernel``/``transform``/``cumulate`` are the per-element reference
operations; ``transform_values`` and the training-graph helpers below
compute the same quantities vectorized, generically over autodiff tensors
or plain ndarrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Layout, ParamVector, SegmentView, asum, exp, raw, reshape, transpose
from .data import Observation, Sequence

NONNEG_SEGMENTS = frozenset({"dist", "horizon"})


@dataclass
class HeadParams:
    """Query/key/value projection vectors of one attention head."""

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray

    def __post_init__(self):
        self.w_query = np.asarray(self.w_query, dtype=np.float64)
        self.w_key = np.asarray(self.w_key, dtype=np.float64)
        self.w_value = np.asarray(self.w_value, dtype=np.float64)


@dataclass
class ModelParams:
    """All learnable quantities plus the fixed decay exponent gamma."""

    heads: list[HeadParams]
    w_cum: np.ndarray  # (C, H) cumulant mixing vectors
    w_dist: float
    w_horizon: float
    gamma: float
    beta0: np.ndarray  # (q,)
    beta: np.ndarray  # (q, C)

    def __post_init__(self):
        self.w_cum = np.asarray(self.w_cum, dtype=np.float64)
        self.beta0 = np.asarray(self.beta0, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.w_dist = float(self.w_dist)
        self.w_horizon = float(self.w_horizon)
        self.gamma = float(self.gamma)

    @property
    def p(self) -> int:
        return self.heads[0].w_query.size - 1

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    @property
    def n_cumulants(self) -> int:
        return self.w_cum.shape[0]

    @property
    def q(self) -> int:
        return self.beta0.size

    def query_matrix(self) -> np.ndarray:
        return np.stack([h.w_query for h in self.heads])

    def key_matrix(self) -> np.ndarray:
        return np.stack([h.w_key for h in self.heads])

    def value_matrix(self) -> np.ndarray:
        return np.stack([h.w_value for h in self.heads])

    def validate(self) -> None:
        if not self.heads:
            raise ValueError("model needs at least one head")
        if self.w_dist < 0 or self.w_horizon < 0:
            raise ValueError("decay rates w_dist and w_horizon must be nonnegative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        p1 = self.heads[0].w_query.size
        for h in self.heads:
            if h.w_query.size != p1 or h.w_key.size != p1 or h.w_value.size != p1:
                raise ValueError("head projection vectors must share length p+1")
        if self.w_cum.shape != (self.n_cumulants, self.n_heads):
            raise ValueError("w_cum must have shape (C, H)")
        if self.beta.shape != (self.q, self.n_cumulants):
            raise ValueError("beta must have shape (q, C)")
        arrays = [self.w_cum, self.beta0, self.beta, self.query_matrix(),
                  self.key_matrix(), self.value_matrix()]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("model parameters contain non-finite values")

    # -- flat-vector conversion ----------------------------------------------

    def to_vector(self) -> ParamVector:
        layout = make_layout(self.p, self.n_heads, self.n_cumulants, self.q)
        values = np.concatenate([
            self.query_matrix().ravel(),
            self.key_matrix().ravel(),
            self.value_matrix().ravel(),
            self.w_cum.ravel(),
            [self.w_dist],
            [self.w_horizon],
            self.beta0.ravel(),
            self.beta.ravel(),
        ])
        return ParamVector(values, layout)

    @classmethod
    def from_vector(cls, theta: ParamVector, gamma: float) -> "ModelParams":
        view = SegmentView(theta.values, theta.layout)
        wq, wk, wv = view["query"], view["key"], view["value"]
        heads = [HeadParams(wq[h].copy(), wk[h].copy(), wv[h].copy())
                 for h in range(wq.shape[0])]
        return cls(
            heads=heads,
            w_cum=view["cum"].copy(),
            w_dist=float(view["dist"]),
            w_horizon=float(view["horizon"]),
            gamma=gamma,
            beta0=view["beta0"].copy(),
            beta=view["beta"].copy(),
        )


def make_layout(p: int, n_heads: int, n_cumulants: int, q: int) -> Layout:
    """Canonical flat layout of all learnable parameters for (p, H, C, q)."""
    p1 = p + 1
    return Layout([
        ("query", (n_heads, p1)),
        ("key", (n_heads, p1)),
        ("value", (n_heads, p1)),
        ("cum", (n_cumulants, n_heads)),
        ("dist", ()),
        ("horizon", ()),
        ("beta0", (q,)),
        ("beta", (q, n_cumulants)),
    ])


# -- reference operations -----------------------------------------------------


def log_kernel(xi: Observation, xl: Observation, head: HeadParams,
               w_dist: float, gamma: float) -> float:
    """Natural log of the pairwise attention kernel between two observations."""
    if xi.p != xl.p:
        raise ValueError("observations must share p")
    if w_dist < 0:
        raise ValueError("w_dist must be nonnegative")
    content = float(xi.x @ head.w_query) * float(xl.x @ head.w_key)
    value = content - (w_dist * abs(xi.t - xl.t)) ** gamma
    if not np.isfinite(value):
        raise FloatingPointError("log-kernel evaluated to a non-finite value")
    return value


def softmax_from_logs(log_values: np.ndarray) -> np.ndarray:
    """Stable softmax of log weights: shift by the max, exponentiate, normalize."""
    log_values = np.asarray(log_values, dtype=np.float64)
    shifted = log_values - log_values.max()
    w = np.exp(shifted)
    return w / w.sum()


def attention_weights(seq: Sequence, i: int, head: HeadParams,
                      w_dist: float, gamma: float) -> np.ndarray:
    """Attention weights over the causal prefix l = 1..i (i is 1-based)."""
    if not 1 <= i <= len(seq):
        raise ValueError(f"position {i} outside 1..{len(seq)}")
    xi = seq.obs[i - 1]
    logs = np.array([log_kernel(xi, seq.obs[l], head, w_dist, gamma)
                     for l in range(i)])
    return softmax_from_logs(logs)


def transform(seq: Sequence, i: int, head: HeadParams,
              w_dist: float, gamma: float) -> float:
    """Transformed value at position i: attention-weighted value projections."""
    w = attention_weights(seq, i, head, w_dist, gamma)
    values = np.array([float(seq.obs[l].x @ head.w_value) for l in range(i)])
    return float(w @ values)


def cumulate(xtilde: np.ndarray, times: np.ndarray, t_pred: float,
             params: ModelParams) -> np.ndarray:
    """Horizon-decayed cumulants z of shape (C,) from transformed values (T, H)."""
    xtilde = np.asarray(xtilde, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if times.size and t_pred < times[-1]:
        raise ValueError("t_pred must not precede the last timestamp")
    decay = np.exp(-((params.w_horizon * np.abs(t_pred - times)) ** params.gamma))
    z = decay @ (xtilde @ params.w_cum.T)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("cumulants evaluated to non-finite values")
    return z


def transform_values(seq: Sequence, params: ModelParams) -> np.ndarray:
    """All transformed values of a sequence as a (T, H) matrix (vectorized)."""
    X = seq.matrix()
    times = seq.times()
    theta = params.to_vector()
    view = SegmentView(theta.values, theta.layout)
    dist_pow3, causal_add3 = _kernel_constants(times, params.gamma)
    return _transform_generic(view, X, dist_pow3, causal_add3, params.gamma)


def predict(seq: Sequence, t_pred: float, params: ModelParams) -> np.ndarray:
    """Prediction vector (q,) at time t_pred from the full sequence."""
    if len(seq) == 0:
        raise ValueError("cannot predict from an empty sequence")
    xtilde = transform_values(seq, params)
    z = cumulate(xtilde, seq.times(), t_pred, params)
    yhat = params.beta0 + params.beta @ z
    if not np.all(np.isfinite(yhat)):
        raise FloatingPointError("prediction evaluated to non-finite values")
    return yhat


@dataclass
class CumulantTrajectory:
    """Per-prefix cumulant vectors: row k holds z for predicting position k."""

    rows: np.ndarray  # (K, C)
    times: np.ndarray  # (K,) horizon timestamps t_k


def cumulant_trajectory(seq: Sequence, params: ModelParams,
                        min_prefix: int = 2) -> CumulantTrajectory:
    """Cumulants along a sequence, one row per prefix of length >= min_prefix - 1.

    Row for position k (1-based, min_prefix <= k <= T) is the cumulant vector
    computed from observations 1..k-1 with prediction time t_k.
    """
    if min_prefix < 2:
        raise ValueError("min_prefix must be at least 2")
    T = len(seq)
    C = params.n_cumulants
    if T < min_prefix:
        return CumulantTrajectory(np.zeros((0, C)), np.zeros(0))
    inputs = Sequence(seq.id, seq.obs[: T - 1])
    xtilde = transform_values(inputs, params)
    times = seq.times()
    rows = np.empty((T - min_prefix + 1, C))
    for idx, k in enumerate(range(min_prefix, T + 1)):
        rows[idx] = cumulate(xtilde[: k - 1], times[: k - 1], times[k - 1], params)
    return CumulantTrajectory(rows, times[min_prefix - 1:])


# -- vectorized forward pass (tape-generic) -----------------------------------


def _kernel_constants(times: np.ndarray, gamma: float):
    """Pairwise |dt|**gamma and the causal -inf additive mask, shaped (T, T, 1)."""
    dt = np.abs(times[:, None] - times[None, :])
    dist_pow3 = (dt**gamma)[:, :, None]
    causal = np.tril(np.ones((times.size, times.size), dtype=bool))
    causal_add3 = np.where(causal, 0.0, -np.inf)[:, :, None]
    return dist_pow3, causal_add3


def _transform_generic(view, X, dist_pow3, causal_add3, gamma):
    """Transformed values (T, H); works on SegmentView over Tensor or ndarray.

    Masked positions are pinned to -inf before the shifted exponentiation,
    so they contribute exact zeros to both numerator and denominator.
    """
    T = X.shape[0]
    Q = X @ transpose(view["query"])  # (T, H)
    K = X @ transpose(view["key"])
    V = X @ transpose(view["value"])
    H = raw(Q).shape[1]
    qk = reshape(Q, (T, 1, H)) * reshape(K, (1, T, H))
    logk = qk - view["dist"] ** gamma * dist_pow3 + causal_add3
    shift = np.max(raw(logk), axis=1, keepdims=True)  # detached; softmax shift
    e = exp(logk - shift)
    num = asum(e * reshape(V, (1, T, H)), axis=1)
    den = asum(e, axis=1)
    return num / den


@dataclass
class SequenceGraph:
    """Precomputed constants for one training sequence's loss graph.

    Inputs are the first T-1 observations; row k of the target block holds
    the variables of observation min_prefix - 1 + k (0-based instance index).
    """

    X: np.ndarray  # (T-1, p+1) inputs
    dist_pow3: np.ndarray  # (T-1, T-1, 1)
    causal_add3: np.ndarray  # (T-1, T-1, 1)
    hor_pow: np.ndarray  # (K, T-1) |t_pred - t_i|**gamma
    hor_add: np.ndarray  # (K, T-1) 0 on the instance's prefix, -inf beyond
    targets: np.ndarray  # (K, p)
    t_preds: np.ndarray  # (K,)
    n_instances: int


def build_sequence_graph(seq: Sequence, min_prefix: int,
                         gamma: float) -> SequenceGraph | None:
    """Constants for all prefix instances of a sequence; None if too short."""
    T = len(seq)
    if T < min_prefix:
        return None
    times = seq.times()
    X = seq.matrix()[: T - 1]
    times_in = times[: T - 1]
    dist_pow3, causal_add3 = _kernel_constants(times_in, gamma)
    k_positions = np.arange(min_prefix, T + 1)  # 1-based target positions
    t_preds = times[k_positions - 1]
    hor_pow = np.abs(t_preds[:, None] - times_in[None, :]) ** gamma
    valid = np.arange(T - 1)[None, :] < (k_positions - 1)[:, None]
    hor_add = np.where(valid, 0.0, -np.inf)
    targets = seq.variables_matrix()[k_positions - 1]
    return SequenceGraph(X, dist_pow3, causal_add3, hor_pow, hor_add,
                         targets, t_preds, len(k_positions))


def sequence_predictions(view, graph: SequenceGraph, gamma):
    """Predictions (K, q) for every prefix instance of one sequence."""
    xtilde = _transform_generic(view, graph.X, graph.dist_pow3,
                                graph.causal_add3, gamma)
    mixed = xtilde @ transpose(view["cum"])  # (T-1, C)
    decay_log = -(view["horizon"] ** gamma * graph.hor_pow) + graph.hor_add
    z = exp(decay_log) @ mixed  # (K, C)
    return z @ transpose(view["beta"]) + view["beta0"]


def sequence_squared_error(view, graph: SequenceGraph, gamma):
    """Summed squared error over all prefix instances of one sequence."""
    residual = graph.targets - sequence_predictions(view, graph, gamma)
    return (residual * residual).sum()
