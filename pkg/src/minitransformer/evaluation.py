"""Metrics and experiment drivers: simulation benchmark grids, the
permutation-test study, cumulant-recovery diagnostics, and k-fold
cross-validation by individual.

Every study derives all randomness from one master seed, and repetitions
or folds can run in parallel without changing any result: each unit's
seeds are a pure function of (master seed, unit index, purpose).
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import (
    AveragePredictor,
    CarryForwardPredictor,
    InformedPredictor,
    RegressionPredictor,
)
from .context_test import TestConfig, enumerate_visits, sample_visits, stat_matrix
from .data import Sequence
from .estimators import MiniTransformer
from .model import ModelParams, cumulant_trajectory
from .simulate import LabeledSequence, SimConfig, generate_dataset, sequences_only
from .training import TrainConfig

SIM_APPROACHES = ("Average", "Regression", "Informed", "MiniTransformer")
CV_APPROACHES = ("Average", "Carry forward", "Regression", "MiniTransformer")


def derive_seed(*keys: int) -> int:
    """Deterministic 64-bit child seed from integer keys."""
    state = np.random.SeedSequence(list(keys)).generate_state(2)
    return (int(state[0]) << 32) | int(state[1])


def mse(pred: np.ndarray, actual: np.ndarray) -> float:
    """Mean squared difference over all entries."""
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    return float(((pred - actual) ** 2).mean())


def mse_per_variable(preds: np.ndarray, actuals: np.ndarray) -> np.ndarray:
    """Column-wise mean squared error over instances."""
    preds = np.asarray(preds, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if preds.shape != actuals.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {actuals.shape}")
    return ((preds - actuals) ** 2).mean(axis=0)


def last_observation_split(seqs: list[Sequence]) -> np.ndarray:
    """Target matrix of each sequence's final observation variables."""
    return np.stack([s.obs[-1].variables for s in seqs])


@dataclass
class MetricRow:
    """Aggregate prediction performance of one approach at one n_train."""

    approach: str
    n_train: int
    mse_mean: float
    mse_sd: float
    target_mse_mean: float
    target_mse_sd: float
    mse_values: tuple[float, ...] = ()
    target_mse_values: tuple[float, ...] = ()


def _make_estimators(sim_cfg: SimConfig, train_cfg: TrainConfig, fit_seed: int) -> dict:
    return {
        "Average": AveragePredictor(),
        "Regression": RegressionPredictor(),
        "Informed": InformedPredictor(j2=sim_cfg.j2, j3=sim_cfg.j3),
        "MiniTransformer": MiniTransformer(
            n_heads=train_cfg.heads,
            n_cumulants=train_cfg.cumulants,
            gamma=train_cfg.gamma,
            learning_rate=train_cfg.learning_rate,
            n_epochs=train_cfg.epochs,
            individuals_per_batch=train_cfg.individuals_per_batch,
            min_prefix=train_cfg.min_prefix,
            init_scale=train_cfg.init_scale,
            optimizer=train_cfg.optimizer,
            random_state=fit_seed,
        ),
    }


def _sim_rep(args) -> dict:
    rep, ns, sim_cfg, train_cfg, test_size, master = args
    test_seed = derive_seed(master, rep, 0)
    test = sequences_only(generate_dataset(test_size, replace(sim_cfg, seed=test_seed)))
    actual = last_observation_split(test)
    out = {}
    for n in ns:
        train_seed = derive_seed(master, rep, 1, n)
        fit_seed = derive_seed(master, rep, 2, n)
        train = sequences_only(generate_dataset(n, replace(sim_cfg, seed=train_seed)))
        for name, est in _make_estimators(sim_cfg, train_cfg, fit_seed).items():
            est.fit(train)
            per_var = mse_per_variable(est.predict(test), actual)
            out[(name, n)] = (float(per_var.mean()), float(per_var[sim_cfg.j3]))
    return out


def run_sim_study(ns: list[int], reps: int, sim_cfg: SimConfig, train_cfg: TrainConfig,
                  test_size: int = 1000, master_seed: int = 0,
                  n_jobs: int = 1) -> list[MetricRow]:
    """Paired comparison of all approaches over seeded train/test repetitions.

    Every approach within one repetition sees identical train and test
    draws; the test set is shared across the n_train grid of a repetition.
    """
    jobs = [(rep, tuple(ns), sim_cfg, train_cfg, test_size, master_seed)
            for rep in range(reps)]
    results = _map_jobs(_sim_rep, jobs, n_jobs)
    rows = []
    for name in SIM_APPROACHES:
        for n in ns:
            overall = np.array([r[(name, n)][0] for r in results])
            target = np.array([r[(name, n)][1] for r in results])
            rows.append(MetricRow(
                approach=name,
                n_train=n,
                mse_mean=float(overall.mean()),
                mse_sd=float(overall.std(ddof=1)) if reps > 1 else 0.0,
                target_mse_mean=float(target.mean()),
                target_mse_sd=float(target.std(ddof=1)) if reps > 1 else 0.0,
                mse_values=tuple(overall),
                target_mse_values=tuple(target),
            ))
    return rows


@dataclass
class TestStudyResult:
    """Per-variable permutation p-values aggregated over repetitions."""

    __test__ = False  # not a test case despite the Test* name

    mean_pvalues: np.ndarray  # (p,)
    sd_pvalues: np.ndarray  # (p,)
    per_rep: np.ndarray  # (reps, p)
    tail: str
    statistic: str
    target: int
    n_visits: int


def _test_rep(args) -> np.ndarray:
    (rep, n_train, sim_cfg, train_cfg, visits_mode, n_visits, n_permutations,
     statistic, tail, delta, master) = args
    data_seed = derive_seed(master, rep, 10)
    fit_seed = derive_seed(master, rep, 11)
    visit_seed = derive_seed(master, rep, 12)
    perm_seed = derive_seed(master, rep, 13)
    train = sequences_only(generate_dataset(n_train, replace(sim_cfg, seed=data_seed)))
    est = _make_estimators(sim_cfg, train_cfg, fit_seed)["MiniTransformer"]
    est.fit(train)
    if visits_mode == "enumerate":
        visits = enumerate_visits(sim_cfg.p)
    else:
        visits = sample_visits(sim_cfg.p, n_visits, np.random.default_rng(visit_seed))
    cfg = TestConfig(visits=visits, delta=delta, n_permutations=n_permutations,
                     statistic=statistic, tail=tail, seed=perm_seed)
    sm = stat_matrix(est.params_, cfg, targets=[sim_cfg.j3])
    return sm.pvals[:, 0]


def run_test_study(n_train: int, sim_cfg: SimConfig, train_cfg: TrainConfig,
                   reps: int = 10, visits_mode: str = "enumerate", n_visits: int = 8,
                   n_permutations: int = 1000, statistic: str = "row-mean",
                   tail: str = "paper", delta: float = 1.0, master_seed: int = 0,
                   n_jobs: int = 1) -> TestStudyResult:
    """Fit on fresh data and run the context test for the pattern target,
    ``reps`` times; aggregate per-variable p-values."""
    if visits_mode not in ("enumerate", "sample"):
        raise ValueError("visits_mode must be 'enumerate' or 'sample'")
    jobs = [(rep, n_train, sim_cfg, train_cfg, visits_mode, n_visits,
             n_permutations, statistic, tail, delta, master_seed)
            for rep in range(reps)]
    per_rep = np.stack(_map_jobs(_test_rep, jobs, n_jobs))
    return TestStudyResult(
        mean_pvalues=per_rep.mean(axis=0),
        sd_pvalues=per_rep.std(axis=0, ddof=1) if reps > 1 else np.zeros(sim_cfg.p),
        per_rep=per_rep,
        tail=tail,
        statistic=statistic,
        target=sim_cfg.j3,
        n_visits=2**sim_cfg.p if visits_mode == "enumerate" else n_visits,
    )


@dataclass
class CumulantRecovery:
    """Correlation of each cumulant's trajectory with the latent state."""

    correlations: np.ndarray  # (C,)
    degenerate: np.ndarray  # (C,) True where a variance vanished
    n_pairs: int


def cumulant_recovery(params: ModelParams, labeled: list[LabeledSequence],
                      min_prefix: int = 2,
                      trajectory_csv_path=None) -> CumulantRecovery:
    """Point-biserial correlation between per-prefix cumulants and the latent
    state of the last prefix observation, pooled over sequences.

    With ``trajectory_csv_path`` set, also writes the pooled rows
    (id, t_pred, latent state, cumulants) for plotting.
    """
    rows, states, csv_rows = [], [], []
    for ls in labeled:
        traj = cumulant_trajectory(ls.seq, params, min_prefix)
        for idx, k in enumerate(range(min_prefix, len(ls.seq) + 1)):
            rows.append(traj.rows[idx])
            states.append(ls.z[k - 2])
            csv_rows.append((ls.seq.id, float(traj.times[idx]), ls.z[k - 2],
                             traj.rows[idx]))
    if not rows:
        raise ValueError("no trajectory rows; sequences shorter than min_prefix")
    if trajectory_csv_path is not None:
        with open(trajectory_csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            C = rows[0].size
            writer.writerow(["id", "t_pred", "latent"]
                            + [f"z{c + 1}" for c in range(C)])
            for seq_id, t, z, values in csv_rows:
                writer.writerow([seq_id, repr(t), z]
                                + [repr(float(v)) for v in values])
    values = np.stack(rows)  # (N, C)
    z = np.asarray(states, dtype=np.float64)
    C = values.shape[1]
    correlations = np.zeros(C)
    degenerate = np.zeros(C, dtype=bool)
    z_sd = z.std()
    for c in range(C):
        v_sd = values[:, c].std()
        if v_sd == 0.0 or z_sd == 0.0:
            degenerate[c] = True
            continue
        correlations[c] = float(np.mean((values[:, c] - values[:, c].mean())
                                        * (z - z.mean())) / (v_sd * z_sd))
    return CumulantRecovery(correlations, degenerate, len(rows))


@dataclass
class CVRow:
    """Cross-validated performance of one approach."""

    approach: str
    fold_mse: tuple[float, ...]
    fold_target_mse: tuple[float, ...]
    mse_mean: float
    mse_sd: float
    target_mse_mean: float
    target_mse_sd: float


@dataclass
class CVReport:
    rows: list[CVRow]
    fold_sizes: tuple[int, ...]
    target: int


def _cv_fold(args) -> dict:
    fold_idx, train_ids, test_ids, dataset, train_cfg, target, master = args
    train = [dataset[i] for i in train_ids]
    test = [dataset[i] for i in test_ids]
    actual = last_observation_split(test)
    fit_seed = derive_seed(master, fold_idx, 20)
    estimators = {
        "Average": AveragePredictor(),
        "Carry forward": CarryForwardPredictor(),
        "Regression": RegressionPredictor(),
        "MiniTransformer": MiniTransformer(
            n_heads=train_cfg.heads,
            n_cumulants=train_cfg.cumulants,
            gamma=train_cfg.gamma,
            learning_rate=train_cfg.learning_rate,
            n_epochs=train_cfg.epochs,
            individuals_per_batch=train_cfg.individuals_per_batch,
            min_prefix=train_cfg.min_prefix,
            init_scale=train_cfg.init_scale,
            optimizer=train_cfg.optimizer,
            random_state=fit_seed,
        ),
    }
    out = {}
    for name, est in estimators.items():
        est.fit(train)
        per_var = mse_per_variable(est.predict(test), actual)
        out[name] = (float(per_var.mean()), float(per_var[target]))
    return out


def run_cv(dataset: list[Sequence], k: int, train_cfg: TrainConfig, target: int,
           master_seed: int = 0, n_jobs: int = 1) -> CVReport:
    """k-fold cross-validation split by individual (never by time point)."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(dataset) < k:
        raise ValueError("dataset smaller than the number of folds")
    order = np.random.default_rng(derive_seed(master_seed, 99)).permutation(len(dataset))
    folds = np.array_split(order, k)
    jobs = []
    for f, test_ids in enumerate(folds):
        test_set = set(int(i) for i in test_ids)
        train_ids = [int(i) for i in order if int(i) not in test_set]
        jobs.append((f, train_ids, sorted(test_set), dataset, train_cfg,
                     target, master_seed))
    results = _map_jobs(_cv_fold, jobs, n_jobs)
    rows = []
    for name in CV_APPROACHES:
        overall = np.array([r[name][0] for r in results])
        tgt = np.array([r[name][1] for r in results])
        rows.append(CVRow(
            approach=name,
            fold_mse=tuple(overall),
            fold_target_mse=tuple(tgt),
            mse_mean=float(overall.mean()),
            mse_sd=float(overall.std(ddof=1)),
            target_mse_mean=float(tgt.mean()),
            target_mse_sd=float(tgt.std(ddof=1)),
        ))
    return CVReport(rows=rows, fold_sizes=tuple(len(f) for f in folds), target=target)


def _map_jobs(fn, jobs, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, jobs))
