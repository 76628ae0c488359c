"""Core data containers: observations, sequences, and input validation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Observation:
    """One time point of an individual.

    ``x`` has length p+1: index 0 is the constant element 1, indices 1..p
    hold the variable values. ``t`` is the timestamp.
    """

    x: np.ndarray
    t: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.t = float(self.t)

    @classmethod
    def from_variables(cls, values, t) -> "Observation":
        values = np.asarray(values, dtype=np.float64)
        return cls(np.concatenate(([1.0], values)), t)

    @property
    def variables(self) -> np.ndarray:
        return self.x[1:]

    @property
    def p(self) -> int:
        return self.x.size - 1


@dataclass
class Sequence:
    """Ordered observations of one individual."""

    id: str
    obs: list[Observation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.obs)

    @property
    def p(self) -> int:
        return self.obs[0].p

    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.obs])

    def matrix(self) -> np.ndarray:
        """Stacked (T, p+1) input matrix including the constant column."""
        return np.stack([o.x for o in self.obs])

    def variables_matrix(self) -> np.ndarray:
        """Stacked (T, p) matrix of variable values only."""
        return np.stack([o.variables for o in self.obs])

    def prefix(self, length: int) -> "Sequence":
        return Sequence(self.id, self.obs[:length])


def validate_observation(obs: Observation, where: str = "") -> None:
    if obs.x.ndim != 1 or obs.x.size < 2:
        raise ValueError(f"observation{where} must be a vector of length >= 2")
    if obs.x[0] != 1.0:
        raise ValueError(f"observation{where} must have constant element 1 at index 0")
    if not np.all(np.isfinite(obs.x)) or not np.isfinite(obs.t):
        raise ValueError(f"observation{where} contains non-finite values")


def validate_sequence(seq: Sequence) -> None:
    """Check a single sequence's invariants, raising ValueError on violation."""
    if not seq.obs:
        raise ValueError(f"sequence {seq.id!r} is empty")
    p = seq.obs[0].p
    prev_t = None
    for i, obs in enumerate(seq.obs):
        validate_observation(obs, where=f" {i} of sequence {seq.id!r}")
        if obs.p != p:
            raise ValueError(
                f"sequence {seq.id!r} mixes dimensions: observation {i} has "
                f"p={obs.p}, expected {p}"
            )
        if prev_t is not None and obs.t <= prev_t:
            raise ValueError(
                f"sequence {seq.id!r}: timestamps must be strictly increasing "
                f"(observation {i}: {obs.t} after {prev_t})"
            )
        prev_t = obs.t


def validate_sequences(dataset: list[Sequence], expect_p: int | None = None) -> int:
    """Validate a dataset and return its shared variable count p."""
    if not dataset:
        raise ValueError("dataset is empty")
    p = dataset[0].p if expect_p is None else expect_p
    for seq in dataset:
        validate_sequence(seq)
        if seq.p != p:
            raise ValueError(
                f"sequence {seq.id!r} has p={seq.p}, expected {p}"
            )
    return p
