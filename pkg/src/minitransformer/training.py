"""Prefix expansion of sequences into training instances, squared-error
loss, and batched SGD fitting of the model parameters.

A sequence of length T yields one instance per target position
k = min_prefix..T: the first k-1 observations predict the variables of
observation k.  Each SGD step takes every instance of a small group of
individuals as one batch; the loss is summed (not averaged) within the
batch, and the decay rates are clamped to stay nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import NonFiniteError, ParamVector, sgd_step, value_and_gradient
from .data import Observation, Sequence, validate_sequences
from .model import (
    NONNEG_SEGMENTS,
    ModelParams,
    build_sequence_graph,
    make_layout,
    predict,
    sequence_squared_error,
)


class TrainingDivergedError(RuntimeError):
    """The loss or gradient became non-finite during SGD."""


# Global-norm cap for plain SGD updates. Healthy batch gradients stay well
# under ~300 even early in training; the cap only interrupts the runaway
# feedback where an exploding kernel exponent produces astronomically large
# gradients within a single epoch.
SGD_CLIP_NORM = 1000.0


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    The default optimizer is Adam with the standard moment decays; plain
    projected SGD is available as optimizer="sgd".  Either way, updates of
    the decay rates are clamped to keep them nonnegative.
    """

    heads: int = 12
    cumulants: int = 2
    gamma: float = 5.0
    learning_rate: float = 0.001
    epochs: int = 100
    individuals_per_batch: int = 1
    min_prefix: int = 3
    seed: int = 0
    init_scale: float = 0.3
    optimizer: str = "adam"

    def validate(self) -> None:
        if self.heads < 1 or self.cumulants < 1:
            raise ValueError("heads and cumulants must be positive")
        if self.gamma <= 0 or self.learning_rate < 0 or self.init_scale <= 0:
            raise ValueError("gamma and init_scale must be positive, learning_rate nonnegative")
        if self.epochs < 1 or self.individuals_per_batch < 1:
            raise ValueError("epochs and individuals_per_batch must be positive")
        if self.min_prefix < 2:
            raise ValueError("min_prefix must be at least 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class TrainingInstance:
    """A prefix of a sequence paired with the next observation as target."""

    inputs: list[Observation]
    target: np.ndarray
    t_pred: float


@dataclass
class FitResult:
    """Fitted parameters plus the mean per-instance loss of each epoch.

    Each epoch's entry is the running training loss: every batch is
    evaluated at the parameters in force before its own update.
    """

    params: ModelParams
    loss_history: list[float] = field(default_factory=list)
    seed: int = 0


def expand_instances(seq: Sequence, min_prefix: int) -> list[TrainingInstance]:
    """One instance per target position k in [min_prefix, T]; [] if too short."""
    if min_prefix < 2:
        raise ValueError("min_prefix must be at least 2")
    out = []
    for k in range(min_prefix, len(seq) + 1):
        target_obs = seq.obs[k - 1]
        out.append(TrainingInstance(
            inputs=seq.obs[: k - 1],
            target=target_obs.variables.copy(),
            t_pred=target_obs.t,
        ))
    return out


def batch_loss(params: ModelParams, batch: list[TrainingInstance]) -> float:
    """Summed squared error of the model over a batch of instances."""
    if not batch:
        raise ValueError("batch is empty")
    total = 0.0
    for inst in batch:
        yhat = predict(Sequence("batch", inst.inputs), inst.t_pred, params)
        diff = inst.target - yhat
        total += float(diff @ diff)
    return total


def init_param_vector(p: int, config: TrainConfig, q: int,
                      rng: np.random.Generator) -> ParamVector:
    """Seeded initialization: normal(0, init_scale) weights, decay rates 0.1."""
    layout = make_layout(p, config.heads, config.cumulants, q)
    values = rng.normal(0.0, config.init_scale, layout.size)
    for name in ("dist", "horizon"):
        start, stop, _ = layout.spec(name)
        values[start:stop] = 0.1
    return ParamVector(values, layout)


class _AdamState:
    """First/second gradient moments with bias correction and the same
    nonnegativity projection as the plain SGD step."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, theta: ParamVector, grad: ParamVector,
             nonneg_segments) -> ParamVector:
        self.t += 1
        g = grad.values
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        new = theta.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        for name in nonneg_segments:
            start, stop, _ = theta.layout.spec(name)
            np.maximum(new[start:stop], 0.0, out=new[start:stop])
        return ParamVector(new, theta.layout)


def fit(dataset: list[Sequence], config: TrainConfig, q: int | None = None) -> FitResult:
    """Fit model parameters to a dataset of sequences by batched SGD.

    Deterministic given (dataset, config): initialization and the per-epoch
    shuffling of individuals both derive from config.seed.
    """
    config.validate()
    p = validate_sequences(dataset)
    if q is None:
        q = p
    if q != p:
        raise ValueError(
            f"targets are the p={p} next-step variables, so q must equal p (got {q})"
        )

    graphs = [g for g in (build_sequence_graph(seq, config.min_prefix, config.gamma)
                          for seq in dataset) if g is not None]
    total_instances = sum(g.n_instances for g in graphs)
    if total_instances == 0:
        raise ValueError(
            f"no training instances: every sequence is shorter than min_prefix={config.min_prefix}"
        )

    init_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(2)
    theta = init_param_vector(p, config, q, np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)

    gamma = config.gamma
    step = config.individuals_per_batch
    adam = _AdamState(theta.layout.size, config.learning_rate) \
        if config.optimizer == "adam" else None
    loss_history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(graphs))
        epoch_loss = 0.0
        for b, start in enumerate(range(0, len(order), step)):
            group = [graphs[i] for i in order[start:start + step]]

            def loss_fn(view, group=group):
                total = sequence_squared_error(view, group[0], gamma)
                for g in group[1:]:
                    total = total + sequence_squared_error(view, g, gamma)
                return total

            try:
                value, grad = value_and_gradient(loss_fn, theta)
            except NonFiniteError as err:
                raise TrainingDivergedError(
                    f"non-finite loss/gradient at epoch {epoch + 1}, batch {b + 1}: {err}"
                ) from err
            if adam is not None:
                theta = adam.step(theta, grad, NONNEG_SEGMENTS)
            else:
                norm = float(np.linalg.norm(grad.values))
                if norm > SGD_CLIP_NORM:
                    grad = ParamVector(grad.values * (SGD_CLIP_NORM / norm),
                                       grad.layout)
                theta = sgd_step(theta, grad, config.learning_rate, NONNEG_SEGMENTS)
            epoch_loss += value
        loss_history.append(epoch_loss / total_instances)

    params = ModelParams.from_vector(theta, gamma)
    return FitResult(params=params, loss_history=loss_history, seed=config.seed)


def training_loss(params: ModelParams, dataset: list[Sequence],
                  min_prefix: int = 3) -> float:
    """Mean per-instance squared-error loss of fixed params on a dataset."""
    theta = params.to_vector()
    total = 0.0
    count = 0
    for seq in dataset:
        graph = build_sequence_graph(seq, min_prefix, params.gamma)
        if graph is None:
            continue
        total += autodiff.evaluate(
            lambda view: sequence_squared_error(view, graph, params.gamma),
            theta.values, theta.layout)
        count += graph.n_instances
    if count == 0:
        raise ValueError("no instances to evaluate")
    return total / count
