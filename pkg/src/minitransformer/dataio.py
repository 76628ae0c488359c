"""CSV and JSON persistence: datasets, fitted models, and result tables.

Dataset files carry a header ``id,time,v1,...,vp`` with one row per
observation; the constant input element is never stored, it is prepended
at load time.  Model files are JSON with every parameter serialized via
repr (shortest float round-trip), so save/load preserves predictions
bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict

import numpy as np

from .context_test import DeltaMatrix, StatMatrix
from .data import Observation, Sequence
from .evaluation import CVReport, MetricRow, TestStudyResult
from .model import CumulantTrajectory, HeadParams, ModelParams
from .simulate import LabeledSequence
from .training import TrainConfig

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

_MODEL_REQUIRED = {
    "format_version", "p", "q", "heads", "cumulants", "gamma",
    "w_query", "w_key", "w_value", "w_cum", "w_dist", "w_horizon",
    "beta0", "beta",
}
_MODEL_OPTIONAL = {"training_seed", "training_config"}


# -- datasets -----------------------------------------------------------------


def variable_names(p: int) -> list[str]:
    return [f"v{j + 1}" for j in range(p)]


def save_dataset(seqs: list[Sequence], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        p = seqs[0].p
        writer.writerow(["id", "time"] + variable_names(p))
        for seq in seqs:
            for obs in seq.obs:
                writer.writerow([seq.id, repr(float(obs.t))] + [repr(float(v)) for v in obs.variables])


def load_dataset(path, binarize: float | None = None) -> list[Sequence]:
    """Read sequences from CSV; optionally binarize variables at a threshold.

    Rows of one id must appear in strictly increasing time order; errors
    name the offending id and row number.
    """
    by_id: dict[str, list[Observation]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "time":
            raise ValueError(f"{path}: header must be id,time,v1,...,vp")
        p = len(header) - 2
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 2:
                raise ValueError(
                    f"{path}:{rownum}: expected {p + 2} fields, got {len(row)}")
            seq_id = row[0]
            try:
                t = float(row[1])
                values = np.array([float(v) for v in row[2:]])
            except ValueError as err:
                raise ValueError(f"{path}:{rownum}: {err}") from None
            if not np.isfinite(t) or not np.all(np.isfinite(values)):
                raise ValueError(f"{path}:{rownum}: non-finite value")
            if binarize is not None:
                values = (values > binarize).astype(np.float64)
            if seq_id not in by_id:
                by_id[seq_id] = []
                order.append(seq_id)
            elif by_id[seq_id][-1].t >= t:
                raise ValueError(
                    f"{path}:{rownum}: time not strictly increasing within id "
                    f"{seq_id!r} ({t} after {by_id[seq_id][-1].t})")
            by_id[seq_id].append(Observation.from_variables(values, t))
    if not order:
        raise ValueError(f"{path}: no data rows")
    return [Sequence(seq_id, by_id[seq_id]) for seq_id in order]


def save_latent_states(labeled: list[LabeledSequence], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "time", "z"])
        for ls in labeled:
            for obs, z in zip(ls.seq.obs, ls.z):
                writer.writerow([ls.seq.id, repr(float(obs.t)), z])


# -- models -------------------------------------------------------------------


def save_model(params: ModelParams, path, training_seed: int | None = None,
               training_config: TrainConfig | None = None) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "p": params.p,
        "q": params.q,
        "heads": params.n_heads,
        "cumulants": params.n_cumulants,
        "gamma": params.gamma,
        "w_query": params.query_matrix().tolist(),
        "w_key": params.key_matrix().tolist(),
        "w_value": params.value_matrix().tolist(),
        "w_cum": params.w_cum.tolist(),
        "w_dist": params.w_dist,
        "w_horizon": params.w_horizon,
        "beta0": params.beta0.tolist(),
        "beta": params.beta.tolist(),
        "training_seed": training_seed,
        "training_config": asdict(training_config) if training_config else None,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ModelParams:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}: not a valid model file ({err})") from None
    missing = _MODEL_REQUIRED - set(doc)
    if missing:
        raise ValueError(f"{path}: missing fields: {sorted(missing)}")
    unknown = set(doc) - _MODEL_REQUIRED - _MODEL_OPTIONAL
    if unknown:
        logger.warning("%s: ignoring unknown fields: %s", path, sorted(unknown))
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"{path}: format_version {doc['format_version']} unsupported "
            f"(expected {MODEL_FORMAT_VERSION})")
    p, q, H, C = doc["p"], doc["q"], doc["heads"], doc["cumulants"]
    wq = np.asarray(doc["w_query"], dtype=np.float64)
    wk = np.asarray(doc["w_key"], dtype=np.float64)
    wv = np.asarray(doc["w_value"], dtype=np.float64)
    for name, arr, shape in [
        ("w_query", wq, (H, p + 1)), ("w_key", wk, (H, p + 1)),
        ("w_value", wv, (H, p + 1)),
    ]:
        if arr.shape != shape:
            raise ValueError(f"{path}: {name} has shape {arr.shape}, expected {shape}")
    params = ModelParams(
        heads=[HeadParams(wq[h], wk[h], wv[h]) for h in range(H)],
        w_cum=np.asarray(doc["w_cum"], dtype=np.float64),
        w_dist=doc["w_dist"],
        w_horizon=doc["w_horizon"],
        gamma=doc["gamma"],
        beta0=np.asarray(doc["beta0"], dtype=np.float64),
        beta=np.asarray(doc["beta"], dtype=np.float64),
    )
    if params.w_cum.shape != (C, H):
        raise ValueError(f"{path}: w_cum has shape {params.w_cum.shape}, expected {(C, H)}")
    if params.beta0.shape != (q,) or params.beta.shape != (q, C):
        raise ValueError(f"{path}: output head shapes inconsistent with (q, C)")
    params.validate()
    return params


# -- result tables ------------------------------------------------------------


def save_loss_history(history: list[float], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, value in enumerate(history, start=1):
            writer.writerow([epoch, repr(float(value))])


def save_predictions(ids: list[str], preds: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + variable_names(preds.shape[1]))
        for seq_id, row in zip(ids, preds):
            writer.writerow([seq_id] + [repr(float(v)) for v in row])


def save_metric_rows(rows: list[MetricRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["approach", "n_train", "mse_mean", "mse_sd",
                         "target_mse_mean", "target_mse_sd"])
        for r in rows:
            writer.writerow([r.approach, r.n_train, repr(r.mse_mean), repr(r.mse_sd),
                             repr(r.target_mse_mean), repr(r.target_mse_sd)])


def format_metric_table(rows: list[MetricRow]) -> str:
    """Aligned text table: approaches x metrics over the n_train grid."""
    ns = sorted({r.n_train for r in rows})
    by_key = {(r.approach, r.n_train): r for r in rows}
    approaches = []
    for r in rows:
        if r.approach not in approaches:
            approaches.append(r.approach)
    header = f"{'Approach':<16} {'Metric':<8}" + "".join(
        f" {'n=' + str(n):>16}" for n in ns)
    lines = [header, "-" * len(header)]
    for name in approaches:
        for metric in ("MSE", "MSE_tgt"):
            cells = []
            for n in ns:
                r = by_key[(name, n)]
                m, s = ((r.mse_mean, r.mse_sd) if metric == "MSE"
                        else (r.target_mse_mean, r.target_mse_sd))
                cells.append(f" {m:.3f} +/- {s:.3f}".rjust(17))
            label = name if metric == "MSE" else ""
            lines.append(f"{label:<16} {metric:<8}" + "".join(cells))
    return "\n".join(lines) + "\n"


def save_cv_report(report: CVReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["approach", "fold", "mse", "target_mse"])
        for row in report.rows:
            for fold, (m, t) in enumerate(zip(row.fold_mse, row.fold_target_mse)):
                writer.writerow([row.approach, fold + 1, repr(m), repr(t)])


def format_cv_table(report: CVReport) -> str:
    header = f"{'Approach':<16} {'MSE':>16} {'MSE_tgt':>16}"
    lines = [header, "-" * len(header)]
    for row in report.rows:
        lines.append(
            f"{row.approach:<16} "
            f"{row.mse_mean:.3f} +/- {row.mse_sd:.3f}".ljust(34)
            + f"{row.target_mse_mean:.3f} +/- {row.target_mse_sd:.3f}")
    return "\n".join(lines) + "\n"


def _visit_labels(visits: np.ndarray) -> list[str]:
    return ["".join(str(int(b)) for b in row) for row in visits]


def save_delta_matrices(deltas: list[DeltaMatrix], visits: np.ndarray, path) -> None:
    labels = _visit_labels(visits)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "variable"] + [f"visit_{s}" for s in labels])
        for dm in deltas:
            for j, row in enumerate(dm.entries):
                writer.writerow([f"v{dm.target + 1}", f"v{j + 1}"]
                                + [repr(float(v)) for v in row])


def _save_matrix_csv(matrix: np.ndarray, targets: list[int], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable"] + [f"v{t + 1}" for t in targets])
        for j, row in enumerate(matrix):
            writer.writerow([f"v{j + 1}"] + [repr(float(v)) for v in row])


def save_stat_matrix(sm: StatMatrix, stats_path, pvals_path) -> None:
    _save_matrix_csv(sm.entries, sm.targets, stats_path)
    _save_matrix_csv(sm.pvals, sm.targets, pvals_path)


def load_matrix_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Read back a stats/p-value CSV: (row labels, column labels, matrix)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        col_labels = header[1:]
        row_labels, rows = [], []
        for row in reader:
            row_labels.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return row_labels, col_labels, np.array(rows)


def save_test_study(result: TestStudyResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "mean_pvalue", "sd_pvalue", "tail",
                         "statistic", "target", "n_visits"])
        for j in range(result.mean_pvalues.size):
            writer.writerow([f"v{j + 1}", repr(float(result.mean_pvalues[j])),
                             repr(float(result.sd_pvalues[j])), result.tail,
                             result.statistic, f"v{result.target + 1}",
                             result.n_visits])


def save_trajectories(ids: list[str], trajectories: list[CumulantTrajectory],
                      path) -> None:
    if not trajectories:
        raise ValueError("no trajectories to save")
    C = trajectories[0].rows.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "t_pred"] + [f"z{c + 1}" for c in range(C)])
        for seq_id, traj in zip(ids, trajectories):
            for t, row in zip(traj.times, traj.rows):
                writer.writerow([seq_id, repr(float(t))] + [repr(float(v)) for v in row])
