import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from minitransformer.estimators import MiniTransformer
from minitransformer.model import predict
from minitransformer.simulate import SimConfig, generate_dataset, sequences_only


def tiny_data(n=15, seed=2, p=4):
    return sequences_only(generate_dataset(n, SimConfig(p=p, j1=0, j2=1, j3=2, seed=seed)))


def tiny_estimator(**kw):
    defaults = dict(n_heads=2, n_cumulants=1, n_epochs=3, random_state=0)
    defaults.update(kw)
    return MiniTransformer(**defaults)


class TestSklearnCompat:
    def test_get_params_round_trip(self):
        est = tiny_estimator(learning_rate=0.01)
        params = est.get_params()
        assert params["n_heads"] == 2
        assert params["learning_rate"] == 0.01
        est2 = MiniTransformer(**params)
        assert est2.get_params() == params

    def test_set_params(self):
        est = tiny_estimator()
        est.set_params(n_epochs=7, init_scale=0.2)
        assert est.n_epochs == 7
        assert est.init_scale == 0.2

    def test_clone(self):
        est = tiny_estimator(n_cumulants=2)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            tiny_estimator().predict(tiny_data())


class TestFitPredict:
    def test_fit_returns_self_and_sets_state(self):
        data = tiny_data()
        est = tiny_estimator()
        assert est.fit(data) is est
        assert est.params_.n_heads == 2
        assert len(est.loss_history_) == 3

    def test_predict_last_observation_protocol(self):
        data = tiny_data()
        est = tiny_estimator().fit(data)
        preds = est.predict(data)
        assert preds.shape == (len(data), 4)
        s = data[0]
        expected = predict(s.prefix(len(s) - 1), s.obs[-1].t, est.params_)
        assert np.allclose(preds[0], expected)

    def test_same_random_state_reproducible(self):
        data = tiny_data()
        a = tiny_estimator().fit(data).predict(data)
        b = tiny_estimator().fit(data).predict(data)
        assert np.array_equal(a, b)

    def test_forecast_beyond_sequence(self):
        data = tiny_data()
        est = tiny_estimator().fit(data)
        t_last = max(s.obs[-1].t for s in data)
        out = est.forecast(data, t_last + 1.0)
        assert out.shape == (len(data), 4)
        per_seq = est.forecast(data, [s.obs[-1].t + 0.5 for s in data])
        assert per_seq.shape == (len(data), 4)

    def test_wrong_p_at_predict_rejected(self):
        est = tiny_estimator().fit(tiny_data(p=4))
        with pytest.raises(ValueError):
            est.predict(tiny_data(p=5))

    def test_trajectories_shapes(self):
        data = tiny_data()
        est = tiny_estimator().fit(data)
        trajs = est.trajectories(data)
        assert len(trajs) == len(data)
        for seq, traj in zip(data, trajs):
            assert traj.rows.shape == (len(seq) - est.min_prefix + 1, 1)

    def test_sgd_optimizer_option(self):
        data = tiny_data()
        est = tiny_estimator(optimizer="sgd").fit(data)
        assert est.params_.w_dist >= 0.0
