"""Reference predictors: per-variable training mean, previous-time-point
linear regression, the structure-informed conditional mean, and
carry-forward.

All baselines follow the same last-observation protocol as the attention
model's evaluation: ``predict(X)`` receives full sequences and predicts the
variables of each sequence's final observation from the preceding ones.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator

from .data import Sequence, validate_sequences

logger = logging.getLogger(__name__)


def _pooled_observations(train: list[Sequence]) -> np.ndarray:
    return np.concatenate([seq.variables_matrix() for seq in train])


def _transition_pairs(train: list[Sequence]) -> tuple[np.ndarray, np.ndarray]:
    """Pooled consecutive pairs (x_i, x_{i+1}) across all sequences."""
    prev, nxt = [], []
    for seq in train:
        vm = seq.variables_matrix()
        if len(seq) >= 2:
            prev.append(vm[:-1])
            nxt.append(vm[1:])
    if not prev:
        return np.zeros((0, train[0].p)), np.zeros((0, train[0].p))
    return np.concatenate(prev), np.concatenate(nxt)


def carry_forward(prefix: list) -> np.ndarray:
    """Variables of the last observation of a nonempty prefix."""
    if not prefix:
        raise ValueError("prefix is empty")
    return np.asarray(prefix[-1].variables, dtype=np.float64).copy()


class AveragePredictor(BaseEstimator):
    """Predicts every variable by its pooled training mean."""

    def fit(self, X: list[Sequence], y=None):
        validate_sequences(X)
        pooled = _pooled_observations(X)
        if pooled.size == 0:
            raise ValueError("no observations to average")
        self.means_ = pooled.mean(axis=0)
        return self

    def predict(self, X: list[Sequence]) -> np.ndarray:
        return np.tile(self.means_, (len(X), 1))


class RegressionPredictor(BaseEstimator):
    """Per-variable least squares on the previous time point's variables.

    Rank-deficient designs get the minimum-norm solution.
    """

    def fit(self, X: list[Sequence], y=None):
        p = validate_sequences(X)
        prev, nxt = _transition_pairs(X)
        if prev.shape[0] == 0:
            raise ValueError("no transition pairs to regress on")
        design = np.column_stack([np.ones(prev.shape[0]), prev])
        coef, *_ = np.linalg.lstsq(design, nxt, rcond=None)
        self.intercepts_ = coef[0].copy()
        self.coefs_ = coef[1:].T.copy()  # (p targets, p features)
        self.p_ = p
        return self

    def predict_from_previous(self, previous: np.ndarray) -> np.ndarray:
        return self.intercepts_ + self.coefs_ @ np.asarray(previous, dtype=np.float64)

    def predict(self, X: list[Sequence]) -> np.ndarray:
        out = np.empty((len(X), self.p_))
        for i, seq in enumerate(X):
            if len(seq) < 2:
                raise ValueError(f"sequence {seq.id!r} has no previous time point")
            out[i] = self.predict_from_previous(seq.obs[-2].variables)
        return out


class InformedPredictor(BaseEstimator):
    """Pooled means everywhere except the pattern target, which uses the mean
    conditional on the trigger variable's previous value.

    j2 and j3 are 0-based variable indices: j3 is the predicted-by-structure
    variable, j2 the conditioning one. A stratum with no transitions falls
    back to the unconditional transition mean (logged, not fatal).
    """

    def __init__(self, j2: int = 1, j3: int = 2):
        self.j2 = j2
        self.j3 = j3

    def fit(self, X: list[Sequence], y=None):
        validate_sequences(X)
        self.means_ = _pooled_observations(X).mean(axis=0)
        prev, nxt = _transition_pairs(X)
        if prev.shape[0] == 0:
            raise ValueError("no transition pairs to stratify")
        overall = nxt[:, self.j3].mean()
        cond = np.empty(2)
        for value in (0, 1):
            mask = prev[:, self.j2] == value
            if mask.any():
                cond[value] = nxt[mask, self.j3].mean()
            else:
                logger.warning(
                    "informed baseline: empty stratum j2=%d, using unconditional mean",
                    value,
                )
                cond[value] = overall
        self.cond_means_j3_ = cond
        return self

    def predict(self, X: list[Sequence]) -> np.ndarray:
        out = np.tile(self.means_, (len(X), 1))
        for i, seq in enumerate(X):
            if len(seq) < 2:
                raise ValueError(f"sequence {seq.id!r} has no previous time point")
            trigger = int(seq.obs[-2].variables[self.j2] == 1)
            out[i, self.j3] = self.cond_means_j3_[trigger]
        return out


class CarryForwardPredictor(BaseEstimator):
    """Predicts the next observation as a copy of the last observed one."""

    def fit(self, X: list[Sequence] | None = None, y=None):
        return self

    def predict(self, X: list[Sequence]) -> np.ndarray:
        out = []
        for seq in X:
            if len(seq) < 2:
                raise ValueError(f"sequence {seq.id!r} has no previous time point")
            out.append(carry_forward(seq.obs[:-1]))
        return np.stack(out)


def fit_average(train: list[Sequence]) -> AveragePredictor:
    return AveragePredictor().fit(train)


def fit_regression(train: list[Sequence]) -> RegressionPredictor:
    return RegressionPredictor().fit(train)


def fit_informed(train: list[Sequence], j2: int, j3: int) -> InformedPredictor:
    return InformedPredictor(j2=j2, j3=j3).fit(train)
