"""Command-line interface: simulation, training, prediction, evaluation,
the context-effect test, and cumulant trajectories.

Every command is deterministic given its flags; one ``--seed`` per command
is split internally into per-purpose streams.  Variable indices on the
command line are 1-based and refer to the CSV columns v1..vp.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataio, heatmap
from .context_test import TestConfig, enumerate_visits, sample_visits, stat_matrix
from .evaluation import derive_seed, run_cv, run_sim_study, run_test_study
from .model import cumulant_trajectory, predict
from .simulate import SimConfig, generate_dataset, sequences_only
from .training import TrainConfig, fit


def _add_sim_flags(parser, with_n=True):
    if with_n:
        parser.add_argument("--n", type=int, required=True, help="number of sequences")
    parser.add_argument("--p", type=int, default=10, help="number of variables")
    parser.add_argument("--j1", type=int, default=1, help="trigger variable (1-based)")
    parser.add_argument("--j2", type=int, default=2, help="second trigger variable (1-based)")
    parser.add_argument("--j3", type=int, default=3, help="pattern target variable (1-based)")
    parser.add_argument("--p-noise", type=float, default=0.7)
    parser.add_argument("--p-signal", type=float, default=0.9)
    parser.add_argument("--p-stop", type=float, default=0.2)
    parser.add_argument("--min-len", type=int, default=3)
    parser.add_argument("--max-len", type=int, default=50)


def _sim_config(args, seed: int) -> SimConfig:
    return SimConfig(p=args.p, j1=args.j1 - 1, j2=args.j2 - 1, j3=args.j3 - 1,
                     p_noise=args.p_noise, p_signal=args.p_signal,
                     p_stop=args.p_stop, min_len=args.min_len,
                     max_len=args.max_len, seed=seed)


def _add_train_flags(parser, heads=12, cumulants=2, epochs=100, batch=1):
    parser.add_argument("--heads", type=int, default=heads)
    parser.add_argument("--cumulants", type=int, default=cumulants)
    parser.add_argument("--gamma", type=float, default=5.0)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--epochs", type=int, default=epochs)
    parser.add_argument("--batch-individuals", type=int, default=batch)
    parser.add_argument("--min-prefix", type=int, default=3)
    parser.add_argument("--init-scale", type=float, default=0.3)
    parser.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(heads=args.heads, cumulants=args.cumulants, gamma=args.gamma,
                       learning_rate=args.lr, epochs=args.epochs,
                       individuals_per_batch=args.batch_individuals,
                       min_prefix=args.min_prefix, seed=seed,
                       init_scale=args.init_scale, optimizer=args.optimizer)


def _cmd_simulate(args) -> int:
    cfg = _sim_config(args, args.seed)
    labeled = generate_dataset(args.n, cfg)
    dataio.save_dataset(sequences_only(labeled), args.out)
    latent_path = args.out_latent or _derived_path(args.out, "_latent")
    dataio.save_latent_states(labeled, latent_path)
    print(f"wrote {args.n} sequences to {args.out}, latent states to {latent_path}")
    return 0


def _cmd_train(args) -> int:
    dataset = dataio.load_dataset(args.data, binarize=args.binarize)
    config = _train_config(args, args.seed)
    result = fit(dataset, config)
    dataio.save_model(result.params, args.out_model,
                      training_seed=args.seed, training_config=config)
    loss_path = args.out_loss or _derived_path(args.out_model, "_loss", ".csv")
    dataio.save_loss_history(result.loss_history, loss_path)
    print(f"trained on {len(dataset)} sequences; final epoch mean loss "
          f"{result.loss_history[-1]:.6f}; model at {args.out_model}")
    return 0


def _cmd_predict(args) -> int:
    params = dataio.load_model(args.model)
    dataset = dataio.load_dataset(args.data, binarize=args.binarize)
    _check_p(params.p, dataset[0].p)
    preds = []
    for seq in dataset:
        if len(seq) < 2:
            raise ValueError(f"sequence {seq.id!r} has no prefix to predict from")
        preds.append(predict(seq.prefix(len(seq) - 1), seq.obs[-1].t, params))
    dataio.save_predictions([s.id for s in dataset], np.stack(preds), args.out)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    if args.mode == "sim":
        ns = [int(x) for x in args.ns.split(",") if x]
        sim_cfg = _sim_config(args, seed=0)  # per-draw seeds derive from --seed
        train_cfg = _train_config(args, seed=0)
        rows = run_sim_study(ns, args.reps, sim_cfg, train_cfg,
                             test_size=args.test_n, master_seed=args.seed,
                             n_jobs=args.jobs)
        dataio.save_metric_rows(rows, args.out)
        table = dataio.format_metric_table(rows)
    else:
        dataset = dataio.load_dataset(args.data, binarize=args.binarize)
        train_cfg = _train_config(args, seed=0)
        report = run_cv(dataset, args.folds, train_cfg, target=args.target - 1,
                        master_seed=args.seed, n_jobs=args.jobs)
        dataio.save_cv_report(report, args.out)
        table = dataio.format_cv_table(report)
    sys.stdout.write(table)
    if args.out_table:
        with open(args.out_table, "w") as fh:
            fh.write(table)
    print(f"wrote {args.out}")
    return 0


def _cmd_context_test(args) -> int:
    params = dataio.load_model(args.model)
    if args.data:
        dataset = dataio.load_dataset(args.data, binarize=args.binarize)
        _check_p(params.p, dataset[0].p)
    targets = [int(t.lstrip("v")) - 1 for t in args.targets.split(",") if t]
    for t in targets:
        if not 0 <= t < params.q:
            raise ValueError(f"target v{t + 1} outside v1..v{params.q}")
    if args.visits == "enumerate":
        visits = enumerate_visits(params.p)
    elif args.visits.startswith("sample:"):
        n_visits = int(args.visits.split(":", 1)[1])
        visits = sample_visits(params.p, n_visits,
                               np.random.default_rng(derive_seed(args.seed, 1)))
    else:
        raise ValueError("--visits must be 'enumerate' or 'sample:V'")
    base = None
    if args.context_base is not None:
        base = np.array([float(x) for x in args.context_base.split(",")])
    cfg = TestConfig(visits=visits, context_base=base, delta=args.delta,
                     n_permutations=args.M, statistic=args.statistic,
                     tail=args.tail, seed=derive_seed(args.seed, 2))
    sm = stat_matrix(params, cfg, targets)
    prefix = args.out
    dataio.save_delta_matrices(sm.deltas, visits, prefix + "_delta.csv")
    dataio.save_stat_matrix(sm, prefix + "_stats.csv", prefix + "_pvalues.csv")
    heatmap.save_heatmap_svg(
        sm.entries,
        row_labels=dataio.variable_names(params.p),
        col_labels=[f"v{t + 1}" for t in targets],
        path=prefix + "_heatmap.svg",
        title=f"context effects ({sm.statistic}, tail={sm.tail})")
    print(f"wrote {prefix}_delta.csv, _stats.csv, _pvalues.csv, _heatmap.svg "
          f"(tail={sm.tail}, statistic={sm.statistic})")
    return 0


def _cmd_trajectory(args) -> int:
    params = dataio.load_model(args.model)
    dataset = dataio.load_dataset(args.data, binarize=args.binarize)
    _check_p(params.p, dataset[0].p)
    trajectories = [cumulant_trajectory(seq, params, args.min_prefix)
                    for seq in dataset]
    dataio.save_trajectories([s.id for s in dataset], trajectories, args.out)
    print(f"wrote trajectories for {len(dataset)} sequences to {args.out}")
    return 0


def _cmd_test_study(args) -> int:
    sim_cfg = _sim_config(args, seed=0)
    train_cfg = _train_config(args, seed=0)
    if args.visits == "enumerate":
        mode, n_visits = "enumerate", 2**args.p
    elif args.visits.startswith("sample:"):
        mode, n_visits = "sample", int(args.visits.split(":", 1)[1])
    else:
        raise ValueError("--visits must be 'enumerate' or 'sample:V'")
    result = run_test_study(args.n, sim_cfg, train_cfg, reps=args.reps,
                            visits_mode=mode, n_visits=n_visits,
                            n_permutations=args.M, statistic=args.statistic,
                            tail=args.tail, delta=args.delta,
                            master_seed=args.seed, n_jobs=args.jobs)
    dataio.save_test_study(result, args.out)
    for j in range(args.p):
        print(f"v{j + 1}: mean p = {result.mean_pvalues[j]:.4f} "
              f"+/- {result.sd_pvalues[j]:.4f}")
    print(f"wrote {args.out} (tail={result.tail})")
    return 0


def _check_p(model_p: int, data_p: int) -> None:
    if model_p != data_p:
        raise ValueError(f"model expects p={model_p} variables, data has p={data_p}")


def _derived_path(path: str, suffix: str, ext: str | None = None) -> str:
    base, dot, old_ext = str(path).rpartition(".")
    if not dot:
        return path + suffix + (ext or "")
    return base + suffix + (ext if ext is not None else dot + old_ext)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minitransformer",
        description="Attention-based autoregression for short longitudinal "
                    "sequences, with a permutation test for context effects.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    _add_sim_flags(p_sim)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="dataset CSV path")
    p_sim.add_argument("--out-latent", help="latent-state CSV (default: <out>_latent.csv)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_train = sub.add_parser("train", help="fit model parameters to a dataset")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--binarize", type=float, default=None,
                         help="threshold: values strictly above become 1, else 0")
    _add_train_flags(p_train)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out-model", required=True)
    p_train.add_argument("--out-loss", help="loss-history CSV (default: <out-model>_loss.csv)")
    p_train.set_defaults(func=_cmd_train)

    p_pred = sub.add_parser("predict",
                            help="predict each sequence's last observation from its prefix")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--binarize", type=float, default=None)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=_cmd_predict)

    p_eval = sub.add_parser("evaluate", help="run the benchmark grid or cross-validation")
    p_eval.add_argument("--mode", choices=["sim", "cv"], required=True)
    p_eval.add_argument("--ns", default="100,200,500,1000",
                        help="comma-separated n_train grid (sim mode)")
    p_eval.add_argument("--reps", type=int, default=10)
    p_eval.add_argument("--test-n", type=int, default=1000)
    _add_sim_flags(p_eval, with_n=False)
    p_eval.add_argument("--data", help="dataset CSV (cv mode)")
    p_eval.add_argument("--binarize", type=float, default=None)
    p_eval.add_argument("--folds", type=int, default=10)
    p_eval.add_argument("--target", type=int, default=10,
                        help="target variable for MSE_tgt (1-based, cv mode)")
    _add_train_flags(p_eval)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--out-table", help="aligned text table path")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_ct = sub.add_parser("context-test", help="permutation test for context effects")
    p_ct.add_argument("--model", required=True)
    p_ct.add_argument("--data", help="dataset CSV; checked for consistency with the model")
    p_ct.add_argument("--binarize", type=float, default=None)
    p_ct.add_argument("--targets", required=True,
                      help="comma-separated target variables, 1-based (e.g. 3 or v3,v5)")
    p_ct.add_argument("--visits", default="enumerate", help="'enumerate' or 'sample:V'")
    p_ct.add_argument("--M", type=int, default=1000, help="number of permutations")
    p_ct.add_argument("--tail", choices=["paper", "upper", "two-sided"], default="paper")
    p_ct.add_argument("--statistic", choices=["row-mean", "row-mean-square"],
                      default="row-mean")
    p_ct.add_argument("--delta", type=float, default=1.0)
    p_ct.add_argument("--context-base", help="comma-separated reference values (default zeros)")
    p_ct.add_argument("--seed", type=int, default=0)
    p_ct.add_argument("--out", required=True,
                      help="output prefix: writes <out>_delta.csv, _stats.csv, "
                           "_pvalues.csv, _heatmap.svg")
    p_ct.set_defaults(func=_cmd_context_test)

    p_traj = sub.add_parser("trajectory", help="per-prefix cumulant trajectories")
    p_traj.add_argument("--model", required=True)
    p_traj.add_argument("--data", required=True)
    p_traj.add_argument("--binarize", type=float, default=None)
    p_traj.add_argument("--min-prefix", type=int, default=2)
    p_traj.add_argument("--out", required=True)
    p_traj.set_defaults(func=_cmd_trajectory)

    p_ts = sub.add_parser("test-study",
                          help="repeat simulate+train+context-test and aggregate p-values")
    p_ts.add_argument("--n", type=int, default=100, help="training sequences per repetition")
    _add_sim_flags(p_ts, with_n=False)
    p_ts.add_argument("--reps", type=int, default=10)
    p_ts.add_argument("--visits", default="sample:8")
    p_ts.add_argument("--M", type=int, default=1000)
    p_ts.add_argument("--tail", choices=["paper", "upper", "two-sided"], default="paper")
    p_ts.add_argument("--statistic", choices=["row-mean", "row-mean-square"],
                      default="row-mean")
    p_ts.add_argument("--delta", type=float, default=1.0)
    _add_train_flags(p_ts)
    p_ts.add_argument("--seed", type=int, default=0)
    p_ts.add_argument("--jobs", type=int, default=1)
    p_ts.add_argument("--out", required=True)
    p_ts.set_defaults(func=_cmd_test_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
