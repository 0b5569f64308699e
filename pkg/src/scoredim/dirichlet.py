"""Spectral-norm (Dirichlet energy) regularization and the training loop.

The regularizer penalizes the squared spectral norm of the score Jacobian,
estimated by alternating transposed-Jacobian products (exact reverse-mode)
with finite-difference Jacobian products.  During training the gradient
flows only through the final output perturbation; the probe direction is
held constant, which is stable and agrees with the estimate at the power
iteration's fixed point.

Score maps passed to the generic helpers follow a small protocol: callable
as ``score(x, t)`` and providing ``score.vjp_input(x, t, v)``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .diffusion import (FixedSchedule, Schedule, VPSchedule, dsm_target,
                        perturb, weight)
from .manifolds import ManifoldSample
from .score_model import (OptimizerState, ScoreModel, forward_cached,
                          grad_params, init_model, init_optimizer,
                          learning_rate, opt_step, vjp_cached)


class PowerIterationResult(NamedTuple):
    sq_spectral_norm: float
    direction: np.ndarray      # unit vector in input space
    degenerate: bool           # hit a zero vector while rescaling


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(np.random.SeedSequence(rng))


def jacobian_power_iteration(score, x: np.ndarray, t=None, b: int = 5,
                             h: float = 1e-3, rng=0) -> PowerIterationResult:
    """Estimate the largest squared singular value of the score Jacobian at x.

    Starting from a Gaussian output-space vector, each round pulls the
    vector back through the transposed Jacobian, normalizes, and pushes it
    forward again by central finite differences with step ``h``.  After
    ``b`` rounds the squared norm of the forward image approximates the
    squared spectral norm, and the input-side unit vector approximates the
    top right singular direction (returned for reuse as a probe).

    A locally constant score yields zero vectors during rescaling; those
    are replaced by fresh random unit vectors and flagged, and the estimate
    returned is 0.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    if h <= 0:
        raise ValueError("h must be positive")
    rng = _as_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    v = rng.standard_normal(n)
    degenerate = False
    u = None
    for _ in range(b):
        nv = np.linalg.norm(v)
        if nv < 1e-300:
            v, degenerate = _random_unit(rng, n), True
        else:
            v = v / nv
        u = score.vjp_input(x, t, v)
        nu = np.linalg.norm(u)
        if nu < 1e-300:
            u, degenerate = _random_unit(rng, n), True
        else:
            u = u / nu
        v = (score(x + (0.5 * h) * u, t) - score(x - (0.5 * h) * u, t)) / h
    return PowerIterationResult(float(v @ v), u, degenerate)


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


@dataclass
class TrainConfig:
    """Hyperparameters for regularized denoising score matching."""

    schedule: Schedule
    gamma: float = 0.0
    iterations: int = 20000
    batch_size: int = 64
    power_iters: int = 5
    fd_step: float = 1e-3
    base_lr: float = 1e-3
    final_lr: float = 1e-5
    hidden: tuple = (256, 256, 256)
    activation: str = "silu"
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.power_iters < 1:
            raise ValueError("power_iters must be >= 1")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")

    @property
    def time_conditioned(self) -> bool:
        return isinstance(self.schedule, VPSchedule)

    @property
    def sigma(self) -> float:
        """Representative noise scale recorded in checkpoints."""
        if isinstance(self.schedule, FixedSchedule):
            return self.schedule.sigma
        return float(np.sqrt(self.schedule.sigma_min_sq))


def single_scale_config(sigma: float, gamma: float = 0.0, **kwargs) -> TrainConfig:
    """Config for a per-noise-level score map with no time dependence."""
    return TrainConfig(schedule=FixedSchedule(sigma), gamma=gamma, **kwargs)


def de_penalty(score, x: np.ndarray, t, cfg: TrainConfig, rng=None) -> float:
    """Regularization value n * gamma * (squared spectral norm) at one point."""
    if cfg.gamma == 0.0:
        return 0.0
    rng = _as_rng(cfg.seed if rng is None else rng)
    result = jacobian_power_iteration(score, x, t, cfg.power_iters,
                                      cfg.fd_step, rng)
    n = np.asarray(x).shape[-1]
    return n * cfg.gamma * result.sq_spectral_norm


def _batched_probes(model: ScoreModel, x: np.ndarray, t,
                    b: int, h: float, rng: np.random.Generator) -> np.ndarray:
    """Power-iteration probe directions for every row of x, vectorized.

    Runs b rounds but leaves the final forward difference to the caller
    (it is re-evaluated inside the loss so its gradient can flow).  Returns
    unit rows (batch, n).
    """
    bsz, n = x.shape
    _, cache = forward_cached(model, x, t)
    t2 = None if t is None else np.concatenate([t, t])
    v = rng.standard_normal((bsz, n))
    u = None
    for i in range(b):
        v = _normalize_rows(v, rng)
        u = _normalize_rows(vjp_cached(model, cache, v), rng)
        if i < b - 1:
            offsets = (0.5 * h) * u
            stacked = model(np.vstack([x + offsets, x - offsets]), t2)
            v = (stacked[:bsz] - stacked[bsz:]) / h
    return u


def _normalize_rows(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    dead = norms[:, 0] < 1e-300
    if np.any(dead):
        repl = rng.standard_normal((int(dead.sum()), a.shape[1]))
        repl /= np.linalg.norm(repl, axis=1, keepdims=True)
        a = a.copy()
        a[dead] = repl
        norms = np.where(norms < 1e-300, 1.0, norms)
    return a / norms


class LossBreakdown(NamedTuple):
    total: float
    dsm: float
    de: float


def _loss_pieces(outputs, bsz, n, target, lam, gamma, h):
    """Loss value, per-term means, and output-space gradient.

    ``outputs`` stacks the score at the perturbed batch and, when the
    penalty is active, the probe-offset evaluations (3 blocks of bsz rows).
    The per-sample weighting lambda multiplies both terms, so the per-noise
    -level balance between matching and regularization is independent of t.
    """
    lam_col = np.asarray(lam).reshape(-1, 1) if np.ndim(lam) else float(lam)
    s = outputs[:bsz]
    diff = s - target
    dsm_each = np.sum(diff * diff, axis=1, keepdims=True) * lam_col
    grad = np.empty_like(outputs)
    grad[:bsz] = (2.0 / bsz) * (lam_col * diff)
    if gamma > 0.0:
        vdir = (outputs[bsz:2 * bsz] - outputs[2 * bsz:]) / h
        de_each = n * gamma * np.sum(vdir * vdir, axis=1, keepdims=True) * lam_col
        gpen = (2.0 * n * gamma / (bsz * h)) * (lam_col * vdir)
        grad[bsz:2 * bsz] = gpen
        grad[2 * bsz:] = -gpen
    else:
        de_each = np.zeros_like(dsm_each)
    dsm_mean = float(np.mean(dsm_each))
    de_mean = float(np.mean(de_each))
    return LossBreakdown(dsm_mean + de_mean, dsm_mean, de_mean), grad


def regularized_dsm_loss(model, x0: np.ndarray, sched: Schedule,
                         cfg: TrainConfig, rng) -> LossBreakdown:
    """Monte Carlo estimate of the training objective on one batch.

    Draws times (uniform on [0,1] for time-dependent schedules), kernel
    noise, and probe seeds from ``rng``; works with any score following
    the forward/vjp protocol.
    """
    rng = _as_rng(rng)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    bsz, n = x0.shape
    time_dep = isinstance(sched, VPSchedule)
    t = rng.random(bsz) if time_dep else None
    z = rng.standard_normal((bsz, n))
    x_t = perturb(sched, x0, t, z)
    target = dsm_target(sched, x0, x_t, t)
    lam = weight(sched, t if time_dep else 0.0)
    blocks = [model(x_t, t)]
    if cfg.gamma > 0.0:
        u = np.empty_like(x_t)
        for i in range(bsz):
            ti = None if t is None else t[i]
            res = jacobian_power_iteration(model, x_t[i], ti, cfg.power_iters,
                                           cfg.fd_step, rng)
            u[i] = res.direction
        offsets = (0.5 * cfg.fd_step) * u
        blocks.append(model(x_t + offsets, t))
        blocks.append(model(x_t - offsets, t))
    breakdown, _ = _loss_pieces(np.vstack(blocks), bsz, n, target, lam,
                                cfg.gamma, cfg.fd_step)
    if not np.isfinite(breakdown.total):
        raise FloatingPointError(
            f"non-finite loss: t={t}, |x_t| max {np.abs(x_t).max():g}, "
            f"de term {breakdown.de:g}")
    return breakdown


class TrainingDiverged(RuntimeError):
    """Loss exploded; carries the last finite model for post-mortems."""

    def __init__(self, iteration: int, loss: float, model: ScoreModel):
        super().__init__(f"training diverged at iteration {iteration}: "
                         f"loss {loss:g}")
        self.iteration = iteration
        self.loss = loss
        self.model = model


DIVERGENCE_LIMIT = 1e6

LOG_COLUMNS = ("iteration", "lr", "dsm_loss", "de_penalty", "wallclock")

_RNG_NAMES = ("batch", "noise", "time", "probe")


@dataclass
class TrainingState:
    """Everything needed to continue a run exactly where it stopped."""

    model: ScoreModel
    opt: "OptimizerState"
    rngs: dict            # name -> np.random.Generator
    next_iter: int


class TrainResult(NamedTuple):
    model: ScoreModel
    log: list
    state: TrainingState


def _fresh_rngs(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(_RNG_NAMES))
    return {name: np.random.Generator(np.random.PCG64(child))
            for name, child in zip(_RNG_NAMES, children)}


def train(data: ManifoldSample, cfg: TrainConfig,
          model: Optional[ScoreModel] = None,
          state: Optional[TrainingState] = None,
          stop_iter: Optional[int] = None) -> TrainResult:
    """Fit a score model to a point cloud by regularized DSM.

    Returns (model, log, state); log rows follow LOG_COLUMNS and the state
    supports exact resumption.  Training is deterministic given
    (data, cfg, initial model): batch indices, kernel noise, times, and
    probe seeds come from independent child streams of cfg.seed, so a run
    paused at ``stop_iter`` and resumed from its saved state finishes with
    bit-identical parameters.  With gamma=0 the probe stream is never
    consumed and the parameter trajectory is bitwise equal to a plain
    weighted-DSM loop.
    """
    points = data.points
    n = data.ambient_dim
    time_dep = cfg.time_conditioned
    if state is not None:
        if model is not None:
            raise ValueError("pass either a model or a state, not both")
        model, opt, rngs = state.model, state.opt, state.rngs
        start_iter = state.next_iter
        if opt.total_steps != cfg.iterations:
            raise ValueError("state was produced with a different"
                             " iteration count")
    else:
        if model is None:
            model = init_model(n, cfg.hidden, time_dep, cfg.activation,
                               cfg.seed)
        opt = init_optimizer(model.n_params, cfg.base_lr, cfg.final_lr,
                             cfg.iterations)
        rngs = _fresh_rngs(cfg.seed)
        start_iter = 0
    if model.ambient_dim != n or model.time_conditioned != time_dep:
        raise ValueError("model incompatible with data/schedule")
    rng_batch, rng_noise = rngs["batch"], rngs["noise"]
    rng_time, rng_probe = rngs["time"], rngs["probe"]
    end_iter = cfg.iterations if stop_iter is None else min(stop_iter,
                                                            cfg.iterations)
    bsz = cfg.batch_size
    log = []
    start = time.perf_counter()
    for it in range(start_iter, end_iter):
        idx = rng_batch.integers(0, points.shape[0], size=bsz)
        x0 = points[idx]
        t = rng_time.random(bsz) if time_dep else None
        z = rng_noise.standard_normal((bsz, n))
        x_t = perturb(cfg.schedule, x0, t, z)
        target = dsm_target(cfg.schedule, x0, x_t, t)
        lam = weight(cfg.schedule, t if time_dep else 0.0)
        if cfg.gamma > 0.0:
            u = _batched_probes(model, x_t, t, cfg.power_iters,
                                cfg.fd_step, rng_probe)
            offsets = (0.5 * cfg.fd_step) * u
            batch_x = np.vstack([x_t, x_t + offsets, x_t - offsets])
            batch_t = None if t is None else np.concatenate([t, t, t])
        else:
            batch_x, batch_t = x_t, t
        stash = {}

        def loss_fn(outputs):
            breakdown, grad = _loss_pieces(outputs, bsz, n, target, lam,
                                           cfg.gamma, cfg.fd_step)
            stash["breakdown"] = breakdown
            return breakdown.total, grad

        try:
            loss, grads = grad_params(model, batch_x, batch_t, loss_fn)
        except FloatingPointError:
            raise TrainingDiverged(it, float("inf"), model) from None
        if loss > DIVERGENCE_LIMIT:
            raise TrainingDiverged(it, loss, model)
        lr_now = learning_rate(opt)
        opt, new_params = opt_step(opt, model.params, grads)
        model.params = new_params
        if it % cfg.log_every == 0 or it == end_iter - 1:
            bd = stash["breakdown"]
            log.append((it, lr_now, bd.dsm, bd.de,
                        time.perf_counter() - start))
    return TrainResult(model, log, TrainingState(model, opt, rngs, end_iter))


def save_training_state(state: TrainingState, path) -> None:
    """Serialize a resumable training state (JSON, hex floats, exact)."""
    model, opt = state.model, state.opt
    payload = {
        "next_iter": state.next_iter,
        "layer_sizes": model.layer_sizes,
        "time_conditioned": model.time_conditioned,
        "activation": model.activation,
        "params": [float(v).hex() for v in model.params],
        "opt": {
            "step": opt.step,
            "m": [float(v).hex() for v in opt.m],
            "v": [float(v).hex() for v in opt.v],
            "base_lr": opt.base_lr, "final_lr": opt.final_lr,
            "total_steps": opt.total_steps, "beta1": opt.beta1,
            "beta2": opt.beta2, "eps_opt": opt.eps_opt,
        },
        "rngs": {name: gen.bit_generator.state
                 for name, gen in state.rngs.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_training_state(path) -> TrainingState:
    """Inverse of :func:`save_training_state`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    model = ScoreModel(payload["layer_sizes"],
                       np.array([float.fromhex(v) for v in payload["params"]]),
                       payload["time_conditioned"], payload["activation"])
    o = payload["opt"]
    opt = OptimizerState(o["step"],
                         np.array([float.fromhex(v) for v in o["m"]]),
                         np.array([float.fromhex(v) for v in o["v"]]),
                         o["base_lr"], o["final_lr"], o["total_steps"],
                         o["beta1"], o["beta2"], o["eps_opt"])
    rngs = {}
    for name in _RNG_NAMES:
        gen = np.random.Generator(np.random.PCG64())
        gen.bit_generator.state = payload["rngs"][name]
        rngs[name] = gen
    return TrainingState(model, opt, rngs, payload["next_iter"])


def write_training_log(log, path, comment: str = None) -> None:
    """CSV training curve: iteration, lr, dsm_loss, de_penalty, wallclock."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for it, lr, dsm, de, wall in log:
            fh.write(f"{it},{lr:.10g},{dsm:.10g},{de:.10g},{wall:.3f}\n")
