"""Fully connected score network with hand-rolled reverse-mode gradients.

Everything runs in float64: the Jacobian probes used downstream difference
forward passes at step sizes around 1e-3, which is noise-dominated in
float32.  The network is a plain MLP; when time-conditioned, the time is
appended to the input as one extra scalar feature.

Parameters live in a single flat vector.  Per-layer weight and bias views
into that vector are materialized on demand, so optimizer updates on the
flat vector are all that is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diffusion import Schedule, parse_schedule_id, schedule_id


def _silu(z):
    s = np.exp(-np.logaddexp(0.0, -z))
    return z * s


def _silu_deriv(z):
    s = np.exp(-np.logaddexp(0.0, -z))
    return s * (1.0 + z * (1.0 - s))


def _tanh_deriv(z):
    return 1.0 - np.tanh(z) ** 2


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "silu": (_silu, _silu_deriv),
    "tanh": (np.tanh, _tanh_deriv),
}


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file cannot be parsed."""


@dataclass
class ScoreModel:
    """MLP score function s(x) or s(x, t) with flat parameter storage.

    ``layer_sizes`` runs input width (ambient dim, plus one when
    time-conditioned) through the hidden widths to the output width, which
    always equals the ambient dimension.  The smooth activation keeps the
    input Jacobian defined everywhere, which the spectral probes rely on.
    """

    layer_sizes: list[int]
    params: np.ndarray
    time_conditioned: bool = False
    activation: str = "silu"
    _offsets: list[tuple[int, int, int]] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer_sizes needs >= 2 positive entries")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        expected_in = self.layer_sizes[-1] + (1 if self.time_conditioned else 0)
        if self.layer_sizes[0] != expected_in:
            raise ValueError("input width must be output width"
                             " plus one when time-conditioned")
        offsets, pos = [], 0
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            offsets.append((pos, pos + fan_in * fan_out,
                            pos + fan_in * fan_out + fan_out))
            pos = offsets[-1][2]
        self._offsets = offsets
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (pos,):
            raise ValueError(f"params must be a flat vector of length {pos}")

    @property
    def ambient_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    def layer_views(self, params: Optional[np.ndarray] = None):
        """(weight, bias) array views per layer into the flat vector."""
        flat = self.params if params is None else params
        views = []
        for (fan_in, fan_out), (w0, b0, end) in zip(
                zip(self.layer_sizes, self.layer_sizes[1:]), self._offsets):
            views.append((flat[w0:b0].reshape(fan_out, fan_in), flat[b0:end]))
        return views

    def __call__(self, x, t=None):
        return forward(self, x, t)

    def vjp_input(self, x, t, v):
        return vjp_input(self, x, t, v)


def init_model(ambient_dim: int, hidden=(256, 256, 256),
               time_conditioned: bool = False, activation: str = "silu",
               seed: int = 0) -> ScoreModel:
    """Variance-scaled random init with a zero final layer.

    The zero-initialized output layer makes the initial score identically
    zero, a stable starting point for denoising score matching.
    """
    in_width = ambient_dim + (1 if time_conditioned else 0)
    layer_sizes = [in_width, *hidden, ambient_dim]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    chunks = []
    last = len(layer_sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        if i == last:
            chunks.append(np.zeros(fan_in * fan_out + fan_out))
        else:
            w = rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in)
            chunks.append(np.concatenate([w.ravel(), np.zeros(fan_out)]))
    return ScoreModel(layer_sizes, np.concatenate(chunks),
                      time_conditioned, activation)


def linear_model(weight: np.ndarray, bias: np.ndarray) -> ScoreModel:
    """Single-layer model computing exactly weight @ x + bias."""
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[0] != weight.shape[1]:
        raise ValueError("weight must be square")
    if bias.shape != (weight.shape[0],):
        raise ValueError("bias shape mismatch")
    params = np.concatenate([weight.ravel(), bias])
    return ScoreModel([weight.shape[1], weight.shape[0]], params)


def _embed(model: ScoreModel, x: np.ndarray, t) -> tuple[np.ndarray, bool]:
    """Validate input, lift to 2-D, append the time feature if any."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.ambient_dim:
        raise ValueError(f"expected points of dimension {model.ambient_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    if model.time_conditioned:
        if t is None:
            raise ValueError("time-conditioned model requires t")
        tcol = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1)
                               if np.ndim(t) else np.float64(t), (x.shape[0], 1))
        x = np.concatenate([x, tcol], axis=1)
    elif t is not None:
        raise ValueError("model is not time-conditioned; t must be None")
    return x, single


def forward_cached(model: ScoreModel, x, t=None):
    """Forward pass keeping per-layer activations for a later backward pass.

    Returns (output, cache); the cache is tied to this (params, x, t)
    evaluation and is consumed by :func:`backward` / :func:`vjp_cached`.
    """
    a, single = _embed(model, x, t)
    act, _ = ACTIVATIONS[model.activation]
    layers = model.layer_views()
    acts, zs = [a], []
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        zs.append(z)
        a = act(z) if i < last else z
        acts.append(a)
    return a[0] if single else a, (acts, zs, single)


def forward(model: ScoreModel, x, t=None) -> np.ndarray:
    """Evaluate the score at x (single vector or batch of rows)."""
    out, _ = forward_cached(model, x, t)
    return out


def backward(model: ScoreModel, cache, grad_out: np.ndarray):
    """Reverse pass: gradients w.r.t. (flat params, inputs).

    ``grad_out`` holds the loss gradient w.r.t. the cached outputs; the
    returned input gradient excludes the appended time feature.
    """
    acts, zs, single = cache
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if single:
        grad_out = grad_out[None, :]
    _, dact = ACTIVATIONS[model.activation]
    grads = np.zeros_like(model.params)
    layers = model.layer_views()
    gviews = model.layer_views(grads)
    g = grad_out
    last = len(layers) - 1
    for i in reversed(range(last + 1)):
        gz = g if i == last else g * dact(zs[i])
        gw, gb = gviews[i]
        np.matmul(gz.T, acts[i], out=gw)
        np.sum(gz, axis=0, out=gb)
        g = gz @ layers[i][0]
    if model.time_conditioned:
        g = g[:, :-1]
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite parameter gradient")
    return grads, (g[0] if single else g)


def vjp_cached(model: ScoreModel, cache, v: np.ndarray) -> np.ndarray:
    """Input-only VJP reusing a forward cache; skips parameter gradients."""
    acts, zs, single = cache
    v = np.asarray(v, dtype=np.float64)
    if single:
        v = v[None, :]
    _, dact = ACTIVATIONS[model.activation]
    layers = model.layer_views()
    g = v
    last = len(layers) - 1
    for i in reversed(range(last + 1)):
        gz = g if i == last else g * dact(zs[i])
        g = gz @ layers[i][0]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at layer {i}")
    if model.time_conditioned:
        g = g[:, :-1]
    return g[0] if single else g


def vjp_input(model: ScoreModel, x, t, v) -> np.ndarray:
    """grad_x of v . s(x, t): the transposed-Jacobian action J^T v."""
    _, cache = forward_cached(model, x, t)
    return vjp_cached(model, cache, v)


def grad_params(model: ScoreModel, x, t, loss_fn):
    """Loss value and flat parameter gradient for an output-space loss.

    ``loss_fn`` maps the batch of forward outputs to
    ``(scalar loss, gradient w.r.t. those outputs)``.  Losses involving
    evaluations at several point sets (e.g. a main batch plus probe
    offsets) are handled by stacking all rows into one x.
    """
    out, cache = forward_cached(model, x, t)
    loss, grad_out = loss_fn(out)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    grads, _ = backward(model, cache, grad_out)
    return float(loss), grads


@dataclass
class OptimizerState:
    """Adam moments plus a cosine learning-rate schedule."""

    step: int
    m: np.ndarray
    v: np.ndarray
    base_lr: float
    final_lr: float
    total_steps: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8


def init_optimizer(n_params: int, base_lr: float = 1e-3, final_lr: float = 1e-5,
                   total_steps: int = 20000, beta1: float = 0.9,
                   beta2: float = 0.999, eps_opt: float = 1e-8) -> OptimizerState:
    if base_lr <= 0 or final_lr <= 0 or total_steps < 1:
        raise ValueError("learning rates must be positive, total_steps >= 1")
    return OptimizerState(0, np.zeros(n_params), np.zeros(n_params),
                          base_lr, final_lr, total_steps, beta1, beta2, eps_opt)


def learning_rate(state: OptimizerState) -> float:
    """Cosine decay from base_lr at step 0 to final_lr at total_steps."""
    frac = min(state.step / state.total_steps, 1.0)
    return state.final_lr + 0.5 * (state.base_lr - state.final_lr) * (
        1.0 + np.cos(np.pi * frac))


def opt_step(state: OptimizerState, params: np.ndarray,
             grads: np.ndarray) -> tuple[OptimizerState, np.ndarray]:
    """One Adam update at the scheduled rate; state is advanced in place.

    Rejects non-finite gradients before touching anything, so a failed
    step leaves both state and params unchanged.
    """
    if grads.shape != params.shape or grads.shape != state.m.shape:
        raise ValueError("gradient/parameter shape mismatch")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    if state.step >= state.total_steps:
        raise ValueError("optimizer already ran for total_steps")
    lr = learning_rate(state)
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    state.step += 1
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    return state, params - lr * mhat / (np.sqrt(vhat) + state.eps_opt)


@dataclass(frozen=True)
class CheckpointMeta:
    """Training provenance stored alongside the weights."""

    sigma: float
    gamma: float
    schedule: Schedule


def save_checkpoint(model: ScoreModel, meta: CheckpointMeta, path) -> None:
    """Write model + metadata as text; hexadecimal floats, bit-exact."""
    lines = [
        "layer_sizes " + ",".join(str(s) for s in model.layer_sizes),
        f"time_conditioned {int(model.time_conditioned)}",
        f"activation {model.activation}",
        f"sigma {float(meta.sigma).hex()}",
        f"gamma {float(meta.gamma).hex()}",
        f"schedule {schedule_id(meta.schedule)}",
        f"params {model.n_params}",
    ]
    lines.extend(float(v).hex() for v in model.params)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ScoreModel, CheckpointMeta]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = {}
    for i, line in enumerate(lines[:7]):
        fields = line.split(maxsplit=1)
        if len(fields) != 2:
            raise CheckpointFormatError(f"malformed header line {i + 1}: {line!r}")
        header[fields[0]] = fields[1]
    required = ["layer_sizes", "time_conditioned", "activation",
                "sigma", "gamma", "schedule", "params"]
    missing = [k for k in required if k not in header]
    if missing:
        raise CheckpointFormatError(f"missing header fields: {missing}")
    try:
        layer_sizes = [int(v) for v in header["layer_sizes"].split(",")]
        time_conditioned = bool(int(header["time_conditioned"]))
        sigma = float.fromhex(header["sigma"])
        gamma = float.fromhex(header["gamma"])
        schedule = parse_schedule_id(header["schedule"])
        count = int(header["params"])
    except ValueError as exc:
        raise CheckpointFormatError(f"bad header value: {exc}") from exc
    body = lines[7:]
    if len(body) != count:
        raise CheckpointFormatError(
            f"expected {count} parameters, found {len(body)}")
    try:
        params = np.array([float.fromhex(v) for v in body])
    except ValueError as exc:
        raise CheckpointFormatError("bad parameter field") from exc
    try:
        model = ScoreModel(layer_sizes, params, time_conditioned,
                           header["activation"])
    except ValueError as exc:
        raise CheckpointFormatError(str(exc)) from exc
    return model, CheckpointMeta(sigma, gamma, schedule)
