"""Scikit-learn style estimator wrapping the attention model.

``fit`` consumes a list of :class:`~minitransformer.data.Sequence` and
trains on all prefix instances; ``predict`` follows the last-observation
protocol (predict each sequence's final observation from the preceding
ones), and ``forecast`` predicts at an explicit future time from the whole
sequence.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import (
    AveragePredictor,
    CarryForwardPredictor,
    InformedPredictor,
    RegressionPredictor,
)
from .data import Sequence, validate_sequences
from .model import cumulant_trajectory, predict
from .training import TrainConfig, fit

__all__ = [
    "MiniTransformer",
    "AveragePredictor",
    "RegressionPredictor",
    "InformedPredictor",
    "CarryForwardPredictor",
]


class MiniTransformer(BaseEstimator):
    """Attention-based autoregressive predictor for short sequences."""

    def __init__(self, n_heads: int = 12, n_cumulants: int = 2, gamma: float = 5.0,
                 learning_rate: float = 0.001, n_epochs: int = 100,
                 individuals_per_batch: int = 1, min_prefix: int = 3,
                 init_scale: float = 0.3, optimizer: str = "adam",
                 random_state: int = 0):
        self.n_heads = n_heads
        self.n_cumulants = n_cumulants
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.individuals_per_batch = individuals_per_batch
        self.min_prefix = min_prefix
        self.init_scale = init_scale
        self.optimizer = optimizer
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            heads=self.n_heads,
            cumulants=self.n_cumulants,
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            epochs=self.n_epochs,
            individuals_per_batch=self.individuals_per_batch,
            min_prefix=self.min_prefix,
            seed=self.random_state,
            init_scale=self.init_scale,
            optimizer=self.optimizer,
        )

    def fit(self, X: list[Sequence], y=None):
        result = fit(X, self._train_config())
        self.params_ = result.params
        self.loss_history_ = result.loss_history
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predicting")

    def predict(self, X: list[Sequence]) -> np.ndarray:
        """Predict each sequence's last observation from its preceding ones."""
        self._check_fitted()
        validate_sequences(X, expect_p=self.params_.p)
        out = np.empty((len(X), self.params_.q))
        for i, seq in enumerate(X):
            if len(seq) < 2:
                raise ValueError(f"sequence {seq.id!r} has no prefix to predict from")
            out[i] = predict(seq.prefix(len(seq) - 1), seq.obs[-1].t, self.params_)
        return out

    def forecast(self, X: list[Sequence], t_pred) -> np.ndarray:
        """Predict at explicit future times using every observation.

        ``t_pred`` is a scalar offset-free absolute time, or one per sequence.
        """
        self._check_fitted()
        validate_sequences(X, expect_p=self.params_.p)
        t_pred = np.broadcast_to(np.asarray(t_pred, dtype=np.float64), (len(X),))
        out = np.empty((len(X), self.params_.q))
        for i, seq in enumerate(X):
            out[i] = predict(seq, float(t_pred[i]), self.params_)
        return out

    def trajectories(self, X: list[Sequence], min_prefix: int | None = None):
        """Per-prefix cumulant trajectories for each sequence."""
        self._check_fitted()
        mp = self.min_prefix if min_prefix is None else min_prefix
        return [cumulant_trajectory(seq, self.params_, mp) for seq in X]
