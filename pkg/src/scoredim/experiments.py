"""Reproducible experiment drivers shared by the command line and the tests.

A run is described by a flat key=value config (see CONFIG_SCHEMA).  The
same dict drives dataset generation, training, estimation, and reporting;
its hash is stamped into every output so results are traceable to the
exact configuration that produced them.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Mapping, Optional

import numpy as np

from .attacks import AttackConfig
from .baselines import baseline_mse, mind_ml, mle_levina_bickel
from .diffusion import FixedSchedule, VPSchedule, kernel_stats
from .dirichlet import TrainConfig, train
from .manifolds import (ManifoldSample, gen_hyper_twin_peaks,
                        gen_isolated_point, gen_isotropic_gaussian,
                        gen_line_disk_ball, gen_swirl)
from .td import estimate_td_batch, estimate_td_over_time, evaluate_mse

WORKERS_ENV = "SCOREDIM_WORKERS"

# Documented configuration schema: key, default, meaning.  Values are
# strings in files; typed accessors below parse them.
CONFIG_SCHEMA = {
    "dataset": ("swirl", "swirl | line_disk_ball | hyper_twin_peaks |"
                         " gaussian | isolated_point"),
    "count": ("1000", "number of points"),
    "seed": ("0", "dataset seed"),
    "noise": ("0.0", "swirl: ambient Gaussian noise scale"),
    "intrinsic_dim": ("10", "hyper_twin_peaks: surface dimension"),
    "dim": ("16", "gaussian / isolated_point: ambient dimension"),
    "variance": ("1.0", "gaussian: coordinate variance"),
    "schedule": ("fixed", "fixed (single noise scale) | vp (full diffusion)"),
    "sigma": ("0.1", "fixed-schedule noise scale"),
    "beta_min": ("0.1", "vp schedule noise-rate start"),
    "beta_max": ("20.0", "vp schedule noise-rate end"),
    "sigma_min_sq": ("0.01", "vp schedule variance floor"),
    "gamma": ("0.01", "spectral-norm regularization strength"),
    "iterations": ("20000", "training iterations"),
    "batch_size": ("64", "training batch size"),
    "power_iters": ("5", "power-iteration rounds per batch"),
    "fd_step": ("0.001", "finite-difference step for Jacobian probes"),
    "base_lr": ("0.001", "initial learning rate"),
    "final_lr": ("1e-05", "cosine-decayed final learning rate"),
    "hidden": ("256,256,256", "hidden layer widths"),
    "activation": ("silu", "hidden nonlinearity: silu | tanh"),
    "train_seed": ("0", "training seed (batches, noise, probes)"),
    "attack_iters": ("10", "adversarial probe steps"),
    "estimators": ("sm,mle_10,mle_20,mind_10,mind_20",
                   "methods for baseline/table3 commands"),
    "trials": ("2", "independent repetitions (seeds base+0..base+trials-1)"),
    "times": ("", "estimate: comma list of probe times for vp models"),
    "benchmarks": ("swirl,swirl_noise,htp10",
                   "table3 rows: swirl swirl_noise ldb htp10 htp30"),
    "out_dir": ("runs", "output directory"),
}


def default_config() -> dict:
    return {k: v for k, (v, _) in CONFIG_SCHEMA.items()}


def read_config(path) -> dict:
    """Parse a key = value config file ('#' comments, blank lines allowed)."""
    items = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_SCHEMA:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            items[key] = value
    return items


def write_config(items: Mapping[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(items):
            fh.write(f"{key} = {items[key]}\n")


def config_hash(items: Mapping[str, str]) -> str:
    """Short stable fingerprint of a config, stamped into outputs."""
    canon = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def resolve(items: Optional[Mapping[str, str]] = None, **overrides) -> dict:
    """Defaults, then config file values, then explicit overrides."""
    merged = default_config()
    merged.update(items or {})
    merged.update({k: str(v) for k, v in overrides.items() if v is not None})
    unknown = set(merged) - set(CONFIG_SCHEMA)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return merged


def make_dataset(items: Mapping[str, str]) -> ManifoldSample:
    """Build the configured dataset."""
    name = items["dataset"]
    count = int(items["count"])
    seed = int(items["seed"])
    if name == "swirl":
        return gen_swirl(count, float(items["noise"]), seed)
    if name == "line_disk_ball":
        return gen_line_disk_ball(count, seed)
    if name == "hyper_twin_peaks":
        return gen_hyper_twin_peaks(int(items["intrinsic_dim"]), count, seed)
    if name == "gaussian":
        return gen_isotropic_gaussian(int(items["dim"]),
                                      float(items["variance"]), count, seed)
    if name == "isolated_point":
        return gen_isolated_point(int(items["dim"]), count)
    raise ValueError(f"unknown dataset {name!r}")


def build_schedule(items: Mapping[str, str]):
    kind = items["schedule"]
    if kind == "fixed":
        return FixedSchedule(float(items["sigma"]))
    if kind == "vp":
        return VPSchedule(float(items["beta_min"]), float(items["beta_max"]),
                          float(items["sigma_min_sq"]))
    raise ValueError(f"unknown schedule {kind!r}")


def build_train_config(items: Mapping[str, str]) -> TrainConfig:
    return TrainConfig(
        schedule=build_schedule(items),
        gamma=float(items["gamma"]),
        iterations=int(items["iterations"]),
        batch_size=int(items["batch_size"]),
        power_iters=int(items["power_iters"]),
        fd_step=float(items["fd_step"]),
        base_lr=float(items["base_lr"]),
        final_lr=float(items["final_lr"]),
        hidden=tuple(int(w) for w in items["hidden"].split(",")),
        activation=items["activation"],
        seed=int(items["train_seed"]),
        log_every=max(1, int(items["iterations"]) // 2000),
    )


def build_attack_config(items: Mapping[str, str], epsilon: float) -> AttackConfig:
    return AttackConfig(epsilon=epsilon, iters=int(items["attack_iters"]))


def worker_count() -> int:
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _parallel_map(fn, args_list):
    workers = worker_count()
    if workers == 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))


def measure_slope(model, x0: np.ndarray, direction: np.ndarray,
                  radius: float, t=None) -> float:
    """Score slope |s(x0 + r u) - s(x0)| / r along a fixed unit direction."""
    direction = np.asarray(direction, dtype=np.float64)
    u = direction / np.linalg.norm(direction)
    return float(np.linalg.norm(model(x0 + radius * u, t) - model(x0, t))
                 / radius)


def learned_variance_near(model, center: np.ndarray, radius: float,
                          t=0.0, n_directions: int = 8, seed: int = 0) -> float:
    """Inverse score slope near a point, averaged over random directions.

    For a model that is locally the score of an isotropic Gaussian, the
    slope magnitude equals 1/variance in every direction, so the mean
    inverse slope reads off the learned variance.
    """
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_directions):
        u = rng.standard_normal(center.shape[0])
        slopes.append(measure_slope(model, center, u, radius, t))
    return float(1.0 / np.mean(slopes))


# ---------------------------------------------------------------------------
# Additive-variance experiments

def isolated_point_slopes(gammas, sigma: float = 0.1, dim: int = 16,
                          iterations: int = 20000, hidden=(64, 64, 64),
                          seed: int = 11):
    """Train single-scale maps on an isolated point; measure inverse slopes.

    Returns [(gamma, inverse slope along the all-ones direction)].  The
    additive-variance prediction is inverse slope = sigma^2 + gamma (all
    ambient directions are normal at a point).
    """
    data = gen_isolated_point(dim, 64)
    out = []
    for gamma in gammas:
        cfg = TrainConfig(schedule=FixedSchedule(sigma), gamma=float(gamma),
                          iterations=iterations, hidden=hidden, seed=seed,
                          log_every=max(1, iterations // 50))
        model = train(data, cfg).model
        delta = measure_slope(model, np.zeros(dim), np.ones(dim), sigma)
        out.append((float(gamma), 1.0 / delta))
    return out


def gaussian_ddpm_variance(gammas, dim: int = 8, count: int = 1000,
                           iterations: int = 20000, hidden=(128, 128, 128),
                           seed: int = 5, grid=(0.25, 4.0, 3001)):
    """Train full diffusion models on a standard Gaussian; fit the variance.

    For each regularization strength, measures the learned variance from
    the score slope near the origin at t=0 and returns the isotropic-KL
    argmin over a variance grid (which should sit near 1 + gamma).
    Returns [(gamma, measured variance, kl-argmin variance)].
    """
    from .gaussian import kl_isotropic

    data = gen_isotropic_gaussian(dim, 1.0, count, seed)
    lo, hi, num = grid
    candidates = np.linspace(lo, hi, int(num))
    out = []
    for gamma in gammas:
        cfg = TrainConfig(schedule=VPSchedule(), gamma=float(gamma),
                          iterations=iterations, hidden=hidden, seed=seed,
                          log_every=max(1, iterations // 50))
        model = train(data, cfg).model
        measured = learned_variance_near(model, np.zeros(dim), radius=0.3,
                                         t=0.0, seed=seed)
        kls = [kl_isotropic(measured, c, dim) for c in candidates]
        out.append((float(gamma), measured, float(candidates[np.argmin(kls)])))
    return out


# ---------------------------------------------------------------------------
# Dimension-estimate benchmarks

BENCHMARKS = {
    "swirl": {"dataset": "swirl", "noise": "0.0"},
    "swirl_noise": {"dataset": "swirl", "noise": "0.01"},
    "ldb": {"dataset": "line_disk_ball"},
    "htp10": {"dataset": "hyper_twin_peaks", "intrinsic_dim": "10"},
    "htp30": {"dataset": "hyper_twin_peaks", "intrinsic_dim": "30"},
}


def sm_trial_mse(items: Mapping[str, str], trial_seed: int) -> float:
    """One score-map trial: generate, train, probe, per-point MSE."""
    run = dict(items)
    run["seed"] = str(trial_seed)
    run["train_seed"] = str(trial_seed)
    sample = make_dataset(run)
    cfg = build_train_config(run)
    model = train(sample, cfg).model
    sigma, gamma = cfg.sigma, cfg.gamma
    attack = build_attack_config(run, sigma)
    t = 0.0 if cfg.time_conditioned else None
    estimates = estimate_td_batch(model, sample.points, gamma, sigma, attack,
                                  t=t, rng=trial_seed)
    return evaluate_mse(estimates, sample.true_td)


def baseline_trial_mse(items: Mapping[str, str], trial_seed: int,
                       method: str, k: int) -> float:
    run = dict(items)
    run["seed"] = str(trial_seed)
    sample = make_dataset(run)
    if method == "mle":
        per_point = mle_levina_bickel(sample.points, k)
        return baseline_mse(per_point, sample.true_td)
    if method == "mind":
        d_hat = mind_ml(sample.points, k)
        return float(np.mean((d_hat - sample.true_td.astype(float)) ** 2))
    raise ValueError(f"unknown baseline {method!r}")


def _table3_cell(args):
    kind, items, trial_seed, method, k = args
    if kind == "sm":
        return sm_trial_mse(items, trial_seed)
    return baseline_trial_mse(items, trial_seed, method, k)


def parse_estimators(items: Mapping[str, str]):
    """Split 'sm,mle_10,...' into (name, method, k) triples."""
    out = []
    for token in items["estimators"].split(","):
        token = token.strip()
        if not token:
            continue
        if token == "sm":
            out.append(("sm", "sm", None))
            continue
        try:
            method, k = token.split("_")
            if method not in ("mle", "mind"):
                raise ValueError
            out.append((token, method, int(k)))
        except ValueError:
            raise ValueError(f"unknown estimator {token!r}") from None
    if not out:
        raise ValueError("no estimators selected")
    return out


def run_table3(items: Mapping[str, str], progress=None) -> dict:
    """Benchmark x estimator MSE grid, averaged over independent trials.

    Returns {"config_hash": ..., "trials": ..., "cells": {benchmark:
    {estimator: {"per_trial": [...], "mean": ...}}}}.  Trial seeds are
    base seed + trial index.  Cells fan out across processes when the
    worker-count environment variable allows it.
    """
    base_seed = int(items["seed"])
    trials = int(items["trials"])
    if trials < 1:
        raise ValueError("trials must be >= 1")
    names = [n.strip() for n in items["benchmarks"].split(",") if n.strip()]
    for name in names:
        if name not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {name!r}; "
                             f"choose from {sorted(BENCHMARKS)}")
    estimators = parse_estimators(items)
    jobs, labels = [], []
    for bench in names:
        bench_items = resolve(items, **BENCHMARKS[bench])
        for est_name, method, k in estimators:
            for trial in range(trials):
                jobs.append(("sm" if method == "sm" else "baseline",
                             bench_items, base_seed + trial, method, k))
                labels.append((bench, est_name, trial))
    results = {bench: {} for bench in names}
    for (bench, est_name, trial), value in zip(labels,
                                               _parallel_map(_table3_cell, jobs)):
        cell = results[bench].setdefault(est_name, {"per_trial": []})
        cell["per_trial"].append(value)
        if progress:
            progress(f"{bench} {est_name} trial {trial}: mse {value:.4f}")
    for bench in results:
        for est_name in results[bench]:
            per_trial = results[bench][est_name]["per_trial"]
            results[bench][est_name]["mean"] = float(np.mean(per_trial))
    return {"config_hash": config_hash(items), "trials": trials,
            "cells": results}


def swirl_time_profiles(n_points: int = 3, times=None, gamma: float = 0.01,
                        count: int = 1000, iterations: int = 40000,
                        hidden=(128, 128, 128), seed: int = 3):
    """Dimension estimates along the forward decay of selected swirl points.

    Trains one time-conditioned diffusion model on the swirl and returns
    (times, {point_index: [clamped estimates per time]}).  Probe points
    are chosen at evenly spaced radius quantiles over the middle of the
    arc, where the curve is cleanly resolvable: on the inner coil the
    radius of curvature approaches the probe scale (the arc genuinely
    stops looking one-dimensional), and the outer coil is sampled too
    sparsely by the inner-heavy angle draw for a tight fit.

    The iteration budget is higher than the other experiments because the
    small-t slice of the model converges last: the loss weight sigma_t^2
    hands those samples a tiny share of the gradient, and an undertrained
    score map reads toward the ambient dimension.
    """
    if times is None:
        times = [i / 10 for i in range(11)]
    sample = gen_swirl(count, seed=seed)
    sched = VPSchedule()
    cfg = TrainConfig(schedule=sched, gamma=gamma, iterations=iterations,
                      hidden=hidden, seed=seed,
                      log_every=max(1, iterations // 50))
    model = train(sample, cfg).model
    radii = np.linalg.norm(sample.points, axis=1)
    quantiles = np.linspace(0.35, 0.65, n_points)
    chosen = [int(np.argmin(np.abs(radii - np.quantile(radii, q))))
              for q in quantiles]
    attack = AttackConfig(epsilon=1.0, iters=10)
    profiles = {}
    for idx in chosen:
        ests = estimate_td_over_time(model, sample.points[idx], times, gamma,
                                     sched, attack, rng=int(idx))
        profiles[int(idx)] = [e.n_hat_clamped for e in ests]
    return list(times), profiles
