"""Synthetic benchmark generator: binary sequences with a hidden trigger
pattern driving one variable.

A latent state z_i switches on once variable j1 fires and variable j2
fires strictly later, with variable j3 silent over the whole stretch from
that j1 firing up to now; any j3 activity tears the pattern down, and it
must rebuild from a fresh j1 firing.  While the state is on, the next
value of j3 is Bernoulli(p_signal); all other variables are i.i.d.
Bernoulli(p_noise) noise, as is every variable at the first time point.
Sequences run for at least min_len steps and then terminate with
probability p_stop after each step, capped at max_len.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Observation, Sequence


@dataclass
class SimConfig:
    """Generator settings. j1, j2, j3 are 0-based variable indices."""

    p: int = 10
    j1: int = 0
    j2: int = 1
    j3: int = 2
    p_noise: float = 0.7
    p_signal: float = 0.9
    p_stop: float = 0.2
    min_len: int = 3
    max_len: int = 50
    seed: int = 0

    def validate(self) -> None:
        idx = (self.j1, self.j2, self.j3)
        if len(set(idx)) != 3 or not all(0 <= j < self.p for j in idx):
            raise ValueError("j1, j2, j3 must be distinct indices in 0..p-1")
        for prob in (self.p_noise, self.p_signal, self.p_stop):
            if not 0.0 <= prob <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.min_len < 3:
            raise ValueError("min_len must be at least 3")
        if self.max_len < self.min_len:
            raise ValueError("max_len must be at least min_len")


@dataclass
class LabeledSequence:
    """A generated sequence together with its latent state at every index."""

    seq: Sequence
    z: list[int] = field(default_factory=list)


def latent_state(history: list[np.ndarray], j1: int, j2: int, j3: int) -> int:
    """Latent state after the last row of ``history`` (list of variable vectors).

    1 iff there are indices i1 < i2 within the history such that j1 fired
    at i1, j2 fired at i2, and j3 has stayed 0 at every index from i1
    through the end of the history.  A j3 firing therefore tears the
    pattern down completely; it only re-arms from a j1 firing after the
    last j3 activity.
    """
    if not history:
        raise ValueError("history must be nonempty")
    n = len(history)
    for i2 in range(1, n):
        if history[i2][j2] != 1:
            continue
        for i1 in range(i2):
            if history[i1][j1] != 1:
                continue
            if all(history[i_star][j3] == 0 for i_star in range(i1, n)):
                return 1
    return 0


class _LatentTracker:
    """Incremental latent state.

    Tracks whether j1 has fired since the last j3 activity, and whether a
    j2 firing followed such a j1 firing; any j3 firing resets both.  The
    state is on iff a complete j1-then-j2 pair stands since the last j3
    activity.
    """

    def __init__(self, j1: int, j2: int, j3: int):
        self.j1, self.j2, self.j3 = j1, j2, j3
        self._j1_armed = False
        self._pair_complete = False

    def update(self, x: np.ndarray) -> int:
        if x[self.j3] == 1:
            self._j1_armed = False
            self._pair_complete = False
        else:
            if x[self.j2] == 1 and self._j1_armed:
                self._pair_complete = True
            if x[self.j1] == 1:
                self._j1_armed = True
        return int(self._pair_complete)


def generate_sequence(cfg: SimConfig, rng: np.random.Generator,
                      seq_id: str = "sim") -> LabeledSequence:
    """One sequence. Timestamps are the integer indices 1..T."""
    noise_idx = [j for j in range(cfg.p) if j != cfg.j3]
    tracker = _LatentTracker(cfg.j1, cfg.j2, cfg.j3)
    rows: list[np.ndarray] = []
    z: list[int] = []
    z_prev = 0
    while True:
        x = np.zeros(cfg.p)
        x[noise_idx] = (rng.random(cfg.p - 1) < cfg.p_noise).astype(float)
        if rows:
            gate = rng.random() < cfg.p_signal
            x[cfg.j3] = 1.0 if (z_prev == 1 and gate) else 0.0
        else:  # no prior state at the first time point: plain noise
            x[cfg.j3] = float(rng.random() < cfg.p_noise)
        rows.append(x)
        z_prev = tracker.update(x)
        z.append(z_prev)
        i = len(rows)
        if i >= cfg.max_len:
            break
        if i >= cfg.min_len and rng.random() < cfg.p_stop:
            break
    obs = [Observation.from_variables(x, float(i + 1)) for i, x in enumerate(rows)]
    return LabeledSequence(Sequence(seq_id, obs), z)


def generate_dataset(n: int, cfg: SimConfig) -> list[LabeledSequence]:
    """n independent sequences from one seeded generator; ids are "1".."n"."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    return [generate_sequence(cfg, rng, seq_id=str(i + 1)) for i in range(n)]


def sequences_only(labeled: list[LabeledSequence]) -> list[Sequence]:
    return [ls.seq for ls in labeled]
