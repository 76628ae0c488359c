import json

import numpy as np
import pytest

from conftest import random_params, random_sequence
from minitransformer import dataio
from minitransformer.context_test import DeltaMatrix, StatMatrix, TestConfig, enumerate_visits, stat_matrix
from minitransformer.model import predict
from minitransformer.simulate import SimConfig, generate_dataset, sequences_only
from minitransformer.training import TrainConfig


class TestDatasetRoundTrip:
    def test_simulated_dataset_lossless(self, tmp_path):
        labeled = generate_dataset(30, SimConfig(p=4, j1=0, j2=1, j3=2, seed=3))
        seqs = sequences_only(labeled)
        path = tmp_path / "d.csv"
        dataio.save_dataset(seqs, path)
        back = dataio.load_dataset(path)
        assert len(back) == len(seqs)
        for a, b in zip(seqs, back):
            assert a.id == b.id
            assert np.array_equal(a.matrix(), b.matrix())
            assert np.array_equal(a.times(), b.times())

    def test_continuous_values_lossless(self, rng, tmp_path):
        seqs = [random_sequence(rng, p=3, T=4, seq_id=f"id{i}") for i in range(4)]
        path = tmp_path / "d.csv"
        dataio.save_dataset(seqs, path)
        back = dataio.load_dataset(path)
        for a, b in zip(seqs, back):
            assert np.array_equal(a.matrix(), b.matrix())

    def test_constant_element_not_stored(self, rng, tmp_path):
        seqs = [random_sequence(rng, p=2, T=2)]
        path = tmp_path / "d.csv"
        dataio.save_dataset(seqs, path)
        header = path.read_text().splitlines()[0]
        assert header == "id,time,v1,v2"

    def test_duplicate_timestamp_names_id_and_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,time,v1\na,1.0,0.5\na,1.0,0.7\n")
        with pytest.raises(ValueError, match=r"bad.csv:3.*'a'"):
            dataio.load_dataset(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,time,v1,v2\na,1.0,0.5\n")
        with pytest.raises(ValueError, match="expected 4 fields"):
            dataio.load_dataset(path)

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,time,v1\na,1.0,abc\n")
        with pytest.raises(ValueError, match="bad.csv:2"):
            dataio.load_dataset(path)

    def test_binarize_threshold_strict(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,time,v1\na,1.0,3.0\na,2.0,3.5\n")
        seqs = dataio.load_dataset(path, binarize=3.0)
        assert seqs[0].variables_matrix().ravel().tolist() == [0.0, 1.0]

    def test_latent_states_file(self, tmp_path):
        labeled = generate_dataset(3, SimConfig(p=4, j1=0, j2=1, j3=2, seed=1))
        path = tmp_path / "z.csv"
        dataio.save_latent_states(labeled, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "id,time,z"
        assert len(lines) == 1 + sum(len(ls.seq) for ls in labeled)


class TestModelRoundTrip:
    def test_predictions_preserved(self, rng, tmp_path):
        params = random_params(rng, p=3, n_heads=2, n_cumulants=2)
        path = tmp_path / "m.json"
        dataio.save_model(params, path)
        back = dataio.load_model(path)
        for trial in range(100):
            seq = random_sequence(rng, p=3, T=3, seq_id=str(trial))
            t_pred = seq.obs[-1].t + 0.5
            a = predict(seq, t_pred, params)
            b = predict(seq, t_pred, back)
            assert np.all(np.abs(a - b) <= 1e-15)

    def test_exact_parameter_round_trip(self, rng, tmp_path):
        params = random_params(rng, p=4, n_heads=3)
        path = tmp_path / "m.json"
        dataio.save_model(params, path, training_seed=7,
                          training_config=TrainConfig())
        back = dataio.load_model(path)
        assert np.array_equal(back.query_matrix(), params.query_matrix())
        assert np.array_equal(back.beta, params.beta)
        assert back.w_dist == params.w_dist
        assert back.gamma == params.gamma

    def test_truncated_file_rejected(self, rng, tmp_path):
        params = random_params(rng, p=2)
        path = tmp_path / "m.json"
        dataio.save_model(params, path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(ValueError, match="not a valid model file"):
            dataio.load_model(path)

    def test_version_mismatch_rejected(self, rng, tmp_path):
        params = random_params(rng, p=2)
        path = tmp_path / "m.json"
        dataio.save_model(params, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="format_version"):
            dataio.load_model(path)

    def test_unknown_fields_ignored_with_warning(self, rng, tmp_path, caplog):
        params = random_params(rng, p=2)
        path = tmp_path / "m.json"
        dataio.save_model(params, path)
        doc = json.loads(path.read_text())
        doc["experimental_extra"] = {"foo": 1}
        path.write_text(json.dumps(doc))
        with caplog.at_level("WARNING"):
            back = dataio.load_model(path)
        assert "experimental_extra" in caplog.text
        assert back.p == params.p

    def test_shape_mismatch_rejected(self, rng, tmp_path):
        params = random_params(rng, p=2)
        path = tmp_path / "m.json"
        dataio.save_model(params, path)
        doc = json.loads(path.read_text())
        doc["w_cum"] = [[1.0]]
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="w_cum"):
            dataio.load_model(path)

    def test_missing_field_rejected(self, rng, tmp_path):
        params = random_params(rng, p=2)
        path = tmp_path / "m.json"
        dataio.save_model(params, path)
        doc = json.loads(path.read_text())
        del doc["beta0"]
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="beta0"):
            dataio.load_model(path)


class TestResultTables:
    def test_stat_matrix_round_trip(self, rng, tmp_path):
        params = random_params(rng, p=3)
        cfg = TestConfig(visits=enumerate_visits(3), seed=4)
        sm = stat_matrix(params, cfg, targets=[0, 2])
        dataio.save_stat_matrix(sm, tmp_path / "s.csv", tmp_path / "p.csv")
        row_labels, col_labels, entries = dataio.load_matrix_csv(tmp_path / "s.csv")
        assert row_labels == ["v1", "v2", "v3"]
        assert col_labels == ["v1", "v3"]
        assert np.array_equal(entries, sm.entries)
        _, _, pvals = dataio.load_matrix_csv(tmp_path / "p.csv")
        assert np.array_equal(pvals, sm.pvals)

    def test_delta_matrix_csv(self, rng, tmp_path):
        visits = enumerate_visits(2)
        deltas = [DeltaMatrix(0, rng.normal(size=(2, 4)))]
        dataio.save_delta_matrices(deltas, visits, tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "target,variable,visit_00,visit_01,visit_10,visit_11"
        assert len(lines) == 3

    def test_loss_history_csv(self, tmp_path):
        dataio.save_loss_history([2.0, 1.5, 1.25], tmp_path / "l.csv")
        lines = (tmp_path / "l.csv").read_text().splitlines()
        assert lines[0] == "epoch,mean_loss"
        assert lines[1].startswith("1,")
        assert len(lines) == 4

    def test_metric_table_layout(self):
        from minitransformer.evaluation import MetricRow
        rows = [
            MetricRow("Average", 100, 0.209, 0.002, 0.218, 0.007),
            MetricRow("Average", 500, 0.209, 0.002, 0.214, 0.01),
            MetricRow("MiniTransformer", 100, 0.21, 0.006, 0.141, 0.03),
            MetricRow("MiniTransformer", 500, 0.196, 0.001, 0.068, 0.006),
        ]
        table = dataio.format_metric_table(rows)
        assert "n=100" in table and "n=500" in table
        assert "0.141 +/- 0.030" in table
        dataio.save_metric_rows(rows, "/dev/null")

    def test_trajectories_csv(self, rng, tmp_path):
        from minitransformer.model import cumulant_trajectory
        params = random_params(rng, p=3, n_cumulants=2)
        seqs = [random_sequence(rng, p=3, T=5, seq_id="a"),
                random_sequence(rng, p=3, T=4, seq_id="b")]
        trajs = [cumulant_trajectory(s, params, 3) for s in seqs]
        dataio.save_trajectories([s.id for s in seqs], trajs, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "id,t_pred,z1,z2"
        assert len(lines) == 1 + 3 + 2
