import numpy as np
import pytest

from minitransformer.data import Observation, Sequence
from minitransformer.model import HeadParams, ModelParams


def random_params(rng, p=3, n_heads=2, n_cumulants=2, q=None, scale=0.3,
                  w_dist=None, w_horizon=None, gamma=5.0) -> ModelParams:
    """Random finite model parameters for oracle comparisons."""
    q = p if q is None else q
    heads = [HeadParams(rng.normal(0, scale, p + 1), rng.normal(0, scale, p + 1),
                        rng.normal(0, scale, p + 1)) for _ in range(n_heads)]
    return ModelParams(
        heads=heads,
        w_cum=rng.normal(0, scale, (n_cumulants, n_heads)),
        w_dist=float(rng.uniform(0, 0.5)) if w_dist is None else w_dist,
        w_horizon=float(rng.uniform(0, 0.5)) if w_horizon is None else w_horizon,
        gamma=gamma,
        beta0=rng.normal(0, scale, q),
        beta=rng.normal(0, scale, (q, n_cumulants)),
    )


def random_sequence(rng, p=3, T=4, seq_id="s", binary=False) -> Sequence:
    times = np.cumsum(rng.uniform(0.5, 1.5, T))
    obs = []
    for t in times:
        values = (rng.random(p) < 0.5).astype(float) if binary else rng.normal(0, 1, p)
        obs.append(Observation.from_variables(values, float(t)))
    return Sequence(seq_id, obs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
