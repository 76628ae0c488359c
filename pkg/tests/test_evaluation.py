import numpy as np
import pytest

from conftest import random_params
from minitransformer.evaluation import (
    CVReport,
    cumulant_recovery,
    derive_seed,
    mse,
    mse_per_variable,
    run_cv,
    run_sim_study,
    run_test_study,
)
from minitransformer.simulate import SimConfig, generate_dataset, sequences_only
from minitransformer.training import TrainConfig


def quick_train_cfg(**kw):
    defaults = dict(heads=2, cumulants=1, epochs=2, learning_rate=0.001)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestMse:
    def test_zero_on_equal(self):
        assert mse(np.ones(5), np.ones(5)) == 0.0

    def test_single_value(self):
        assert mse(np.array([0.5]), np.array([1.0])) == pytest.approx(0.25)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.ones(3), np.ones(4))

    def test_per_variable_columns(self):
        preds = np.array([[0.0, 1.0], [0.0, 1.0]])
        actual = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert np.allclose(mse_per_variable(preds, actual), [0.5, 0.5])

    def test_bernoulli_variance(self):
        rng = np.random.default_rng(8)
        data = (rng.random(100000) < 0.7).astype(float)
        value = mse(np.full(100000, 0.7), data)
        assert abs(value - 0.21) < 0.005


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)
        assert derive_seed(0, 1) != derive_seed(1, 0)


class TestRunSimStudy:
    def test_reproducible_and_paired(self):
        sim_cfg = SimConfig(p=4, j1=0, j2=1, j3=2)
        rows1 = run_sim_study([20], 2, sim_cfg, quick_train_cfg(),
                              test_size=30, master_seed=5)
        rows2 = run_sim_study([20], 2, sim_cfg, quick_train_cfg(),
                              test_size=30, master_seed=5)
        assert [(r.approach, r.mse_mean) for r in rows1] == \
               [(r.approach, r.mse_mean) for r in rows2]
        approaches = {r.approach for r in rows1}
        assert approaches == {"Average", "Regression", "Informed", "MiniTransformer"}
        for r in rows1:
            assert len(r.mse_values) == 2
            assert r.mse_sd >= 0.0

    def test_parallel_equals_serial(self):
        sim_cfg = SimConfig(p=4, j1=0, j2=1, j3=2)
        serial = run_sim_study([15], 2, sim_cfg, quick_train_cfg(),
                               test_size=20, master_seed=3, n_jobs=1)
        parallel = run_sim_study([15], 2, sim_cfg, quick_train_cfg(),
                                 test_size=20, master_seed=3, n_jobs=2)
        for a, b in zip(serial, parallel):
            assert a.mse_values == b.mse_values


class TestRunTestStudy:
    def test_shapes_and_determinism(self):
        sim_cfg = SimConfig(p=4, j1=0, j2=1, j3=2)
        a = run_test_study(15, sim_cfg, quick_train_cfg(), reps=2,
                           visits_mode="enumerate", n_permutations=50,
                           master_seed=1)
        b = run_test_study(15, sim_cfg, quick_train_cfg(), reps=2,
                           visits_mode="enumerate", n_permutations=50,
                           master_seed=1)
        assert np.array_equal(a.per_rep, b.per_rep)
        assert a.per_rep.shape == (2, 4)
        assert a.n_visits == 16
        assert np.all(a.mean_pvalues >= 0) and np.all(a.mean_pvalues <= 1)

    def test_sampled_visits_mode(self):
        sim_cfg = SimConfig(p=5, j1=0, j2=1, j3=2)
        res = run_test_study(12, sim_cfg, quick_train_cfg(), reps=1,
                             visits_mode="sample", n_visits=4,
                             n_permutations=20, master_seed=2)
        assert res.n_visits == 4
        assert res.per_rep.shape == (1, 5)

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            run_test_study(10, SimConfig(p=4), quick_train_cfg(),
                           visits_mode="all")


class TestCumulantRecovery:
    def test_zero_weight_model_flagged(self, rng):
        params = random_params(rng, p=4, n_cumulants=2)
        params.w_cum = np.zeros_like(params.w_cum)
        labeled = generate_dataset(20, SimConfig(p=4, j1=0, j2=1, j3=2, seed=4))
        rec = cumulant_recovery(params, labeled)
        assert np.all(rec.degenerate)
        assert np.all(rec.correlations == 0.0)

    def test_constant_latent_flagged(self, rng):
        params = random_params(rng, p=4, n_cumulants=1)
        labeled = generate_dataset(10, SimConfig(p=4, j1=0, j2=1, j3=2, seed=6))
        for ls in labeled:
            ls.z = [0] * len(ls.z)
        rec = cumulant_recovery(params, labeled)
        assert np.all(rec.degenerate)

    def test_perfect_tracker_correlates(self, rng):
        # synthetic check: replace trajectories implicitly by constructing a
        # model whose single cumulant is constant; correlation must be 0/flagged,
        # and pairing counts must match the trajectory rule
        params = random_params(rng, p=4, n_cumulants=1)
        labeled = generate_dataset(25, SimConfig(p=4, j1=0, j2=1, j3=2, seed=9))
        rec = cumulant_recovery(params, labeled, min_prefix=2)
        expected_pairs = sum(len(ls.seq) - 1 for ls in labeled)
        assert rec.n_pairs == expected_pairs
        assert np.all(np.abs(rec.correlations) <= 1.0)


class TestRunCv:
    def test_partition_properties(self):
        data = sequences_only(generate_dataset(12, SimConfig(p=4, j1=0, j2=1, j3=2, seed=7)))
        report = run_cv(data, 3, quick_train_cfg(), target=2, master_seed=1)
        assert isinstance(report, CVReport)
        assert sum(report.fold_sizes) == 12
        assert len(report.fold_sizes) == 3
        names = [r.approach for r in report.rows]
        assert names == ["Average", "Carry forward", "Regression", "MiniTransformer"]
        for row in report.rows:
            assert len(row.fold_mse) == 3

    def test_leave_one_out_boundary(self):
        data = sequences_only(generate_dataset(4, SimConfig(p=4, j1=0, j2=1, j3=2, seed=8)))
        report = run_cv(data, 4, quick_train_cfg(), target=0, master_seed=0)
        assert report.fold_sizes == (1, 1, 1, 1)

    def test_too_few_individuals_rejected(self):
        data = sequences_only(generate_dataset(3, SimConfig(p=4, j1=0, j2=1, j3=2, seed=9)))
        with pytest.raises(ValueError):
            run_cv(data, 5, quick_train_cfg(), target=0)
        with pytest.raises(ValueError):
            run_cv(data, 1, quick_train_cfg(), target=0)
