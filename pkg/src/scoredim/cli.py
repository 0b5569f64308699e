"""Command line front end.

Subcommands: generate, train, estimate, baseline, table3.  Every command
accepts ``--config FILE`` (key = value lines, schema in
experiments.CONFIG_SCHEMA) with individual flags overriding file values.
Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure
(divergence, non-finite values), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments as exp
from .baselines import baseline_mse, mind_ml, mle_levina_bickel
from .dirichlet import (TrainingDiverged, load_training_state,
                        save_training_state, train, write_training_log)
from .manifolds import DatasetFormatError, export_csv, load_sample, save_sample
from .score_model import (CheckpointFormatError, CheckpointMeta,
                          load_checkpoint, save_checkpoint)
from .td import estimate_td_batch, estimate_td_over_time, evaluate_mse
from .td import write_results_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p: _Parser, keys):
    p.add_argument("--config", help="key = value config file")
    for key in keys:
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=f"cfg_{key}", metavar="V",
                       help=exp.CONFIG_SCHEMA[key][1])


def _gather(args) -> tuple[dict, set]:
    """Merge defaults, config file, and command line flags.

    Returns (items, explicitly-set keys); the latter distinguishes user
    requests from schema defaults.
    """
    file_items = exp.read_config(args.config) if args.config else {}
    overrides = {key[4:]: value for key, value in vars(args).items()
                 if key.startswith("cfg_") and value is not None}
    return exp.resolve(file_items, **overrides), set(file_items) | set(overrides)


def _require_readable(path):
    if not os.path.exists(path):
        raise OSError(f"missing file: {path}")


def _refuse_overwrite(path, force: bool):
    if os.path.exists(path) and not force:
        raise OSError(f"{path} exists; pass --force to overwrite")


DATASET_KEYS = ("dataset", "count", "seed", "noise", "intrinsic_dim",
                "dim", "variance")
TRAIN_KEYS = ("schedule", "sigma", "beta_min", "beta_max", "sigma_min_sq",
              "gamma", "iterations", "batch_size", "power_iters", "fd_step",
              "base_lr", "final_lr", "hidden", "activation", "train_seed")


def cmd_generate(args) -> int:
    items, _ = _gather(args)
    _refuse_overwrite(args.out, args.force)
    sample = exp.make_dataset(items)
    save_sample(sample, args.out)
    if args.csv:
        export_csv(sample, args.csv)
    td_values, td_counts = np.unique(sample.true_td, return_counts=True)
    breakdown = " ".join(f"td{v}:{c}" for v, c in zip(td_values, td_counts))
    print(f"wrote {args.out}: {sample.name} count={sample.count} "
          f"ambient={sample.ambient_dim} seed={sample.seed} [{breakdown}] "
          f"config={exp.config_hash(items)}")
    return EXIT_OK


def cmd_train(args) -> int:
    items, _ = _gather(args)
    _require_readable(args.data)
    _refuse_overwrite(args.out, args.force)
    sample = load_sample(args.data)
    cfg = exp.build_train_config(items)
    chash = exp.config_hash(items)
    state = None
    if args.resume:
        _require_readable(args.resume)
        state = load_training_state(args.resume)
    try:
        result = train(sample, cfg, state=state, stop_iter=args.stop_iter)
    except TrainingDiverged as exc:
        crash_path = args.out + ".diverged"
        save_checkpoint(exc.model, CheckpointMeta(cfg.sigma, cfg.gamma,
                                                  cfg.schedule), crash_path)
        print(f"error: {exc}; last checkpoint saved to {crash_path}",
              file=sys.stderr)
        return EXIT_NUMERIC
    meta = CheckpointMeta(cfg.sigma, cfg.gamma, cfg.schedule)
    save_checkpoint(result.model, meta, args.out)
    if args.log:
        write_training_log(result.log, args.log, comment=f"config {chash}")
    if args.state:
        save_training_state(result.state, args.state)
    first, last = result.log[0], result.log[-1]
    print(f"wrote {args.out}: iterations {result.state.next_iter} "
          f"dsm {first[2]:.4g} -> {last[2]:.4g} de {last[3]:.4g} "
          f"config={chash}")
    return EXIT_OK


def _parse_times(text: str):
    try:
        times = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --times list: {text!r}") from None
    if not times or any(t < 0 or t > 1 for t in times):
        raise UsageError("times must lie in [0, 1]")
    return sorted(times)


def cmd_estimate(args) -> int:
    items, explicit = _gather(args)
    _require_readable(args.data)
    _require_readable(args.model)
    _refuse_overwrite(args.out, args.force)
    sample = load_sample(args.data)
    model, meta = load_checkpoint(args.model)
    if model.ambient_dim != sample.ambient_dim:
        raise UsageError(
            f"checkpoint dimension {model.ambient_dim} does not match "
            f"dataset dimension {sample.ambient_dim}")
    for key, recorded in (("gamma", meta.gamma), ("sigma", meta.sigma)):
        if key in explicit and float(items[key]) != recorded:
            raise UsageError(
                f"checkpoint was trained with {key}={recorded!r}, "
                f"config requests {float(items[key])!r}")
    chash = exp.config_hash(items)
    attack = exp.build_attack_config(items, meta.sigma)
    if items["times"]:
        times = _parse_times(items["times"])
        _write_time_series(args.out, model, sample, meta, times, attack,
                           chash, int(items["seed"]))
        print(f"wrote {args.out}: {sample.count} points x {len(times)} times "
              f"config={chash}")
        return EXIT_OK
    t = 0.0 if model.time_conditioned else None
    estimates = estimate_td_batch(model, sample.points, meta.gamma,
                                  meta.sigma, attack, t=t,
                                  rng=int(items["seed"]))
    write_results_csv(estimates, args.out, comment=f"config {chash}")
    mse = evaluate_mse(estimates, sample.true_td)
    print(f"wrote {args.out}: {len(estimates)} estimates mse={mse:.6f} "
          f"config={chash}")
    return EXIT_OK


def _write_time_series(path, model, sample, meta, times, attack, chash,
                       seed) -> None:
    from .diffusion import kernel_stats

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config {chash}\n")
        fh.write("point_index,t,sigma_t,delta,n_hat_raw,n_hat_clamped,flags\n")
        for i in range(sample.count):
            series = estimate_td_over_time(model, sample.points[i], times,
                                           meta.gamma, meta.schedule, attack,
                                           rng=seed + i)
            for t, est in zip(times, series):
                _, sigma_t = kernel_stats(meta.schedule, t)
                flags = ";".join(sorted(est.flags))
                fh.write(f"{i},{t:g},{sigma_t:.8g},{est.delta!r},"
                         f"{est.n_hat!r},{est.n_hat_clamped!r},{flags}\n")


def cmd_baseline(args) -> int:
    items, _ = _gather(args)
    _require_readable(args.data)
    _refuse_overwrite(args.out, args.force)
    sample = load_sample(args.data)
    chash = exp.config_hash(items)
    chosen = [e for e in exp.parse_estimators(items) if e[1] != "sm"]
    if not chosen:
        raise UsageError("no kNN estimators selected (estimators key)")
    summaries = []
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"# config {chash}\n")
        fh.write("index,method,k,estimate\n")
        for name, method, k in chosen:
            if k >= sample.count:
                raise UsageError(f"{name}: k={k} needs more than k points")
            if method == "mle":
                per_point = mle_levina_bickel(sample.points, k)
                mse = baseline_mse(per_point, sample.true_td)
            else:
                d_hat = mind_ml(sample.points, k)
                per_point = np.full(sample.count, float(d_hat))
                mse = float(np.mean((per_point - sample.true_td) ** 2))
            for i, value in enumerate(per_point):
                text = "" if np.isnan(value) else repr(float(value))
                fh.write(f"{i},{method},{k},{text}\n")
            summaries.append(f"{name} mse={mse:.6f}")
    print(f"wrote {args.out}: " + " ".join(summaries) + f" config={chash}")
    return EXIT_OK


def cmd_table3(args) -> int:
    items, _ = _gather(args)
    out_dir = items["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    results = exp.run_table3(items, progress=print if args.verbose else None)
    json_path = os.path.join(out_dir, "table3.json")
    csv_path = os.path.join(out_dir, "table3.csv")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
    estimator_names = [name for name, _, _ in exp.parse_estimators(items)]
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(f"# config {results['config_hash']}\n")
        fh.write("benchmark," + ",".join(estimator_names) + "\n")
        for bench, cells in results["cells"].items():
            row = [bench] + [f"{cells[name]['mean']:.6f}"
                             for name in estimator_names]
            fh.write(",".join(row) + "\n")
    print(f"wrote {json_path} and {csv_path} "
          f"(trials={results['trials']}, config={results['config_hash']})")
    for bench, cells in results["cells"].items():
        parts = " ".join(f"{name}={cells[name]['mean']:.4f}"
                         for name in estimator_names)
        print(f"  {bench}: {parts}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="scoredim",
                     description="Train score models with spectral-norm "
                                 "regularization and estimate local "
                                 "topological dimension.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset file")
    _add_config_flags(p, DATASET_KEYS)
    p.add_argument("--out", required=True, help="dataset file path")
    p.add_argument("--csv", help="also write a lossy decimal CSV")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a score model on a dataset file")
    _add_config_flags(p, TRAIN_KEYS)
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training-curve CSV path")
    p.add_argument("--state", help="write resumable training state here")
    p.add_argument("--resume", help="continue from a saved training state")
    p.add_argument("--stop-iter", type=int,
                   help="pause after this iteration (use with --state)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("estimate",
                       help="per-point dimension estimates from a checkpoint")
    _add_config_flags(p, ("attack_iters", "seed", "gamma", "sigma", "times"))
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("baseline", help="kNN estimator results on a dataset")
    _add_config_flags(p, ("estimators",))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("table3",
                       help="benchmark x estimator MSE grid over trials")
    _add_config_flags(p, ("benchmarks", "estimators", "trials", "seed",
                          "iterations", "batch_size", "gamma", "sigma",
                          "hidden", "out_dir", "attack_iters"))
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_table3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, DatasetFormatError, CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
