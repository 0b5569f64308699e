"""Variance-preserving diffusion schedule and denoising score matching targets.

Two schedule flavors share one interface:

* :class:`VPSchedule` — the continuous DDPM forward process with a linear
  noise rate.  Used for time-conditioned models.
* :class:`FixedSchedule` — a degenerate schedule with identity mean and a
  single constant noise scale.  Used for per-noise-level score maps that
  have no time dependence.

All operations accept scalar ``t`` or a 1-D batch of times aligned with the
rows of the point arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("t must lie in [0, 1]")
    return t


def _per_row(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reshape per-time scalars to broadcast against (batch, dim) points."""
    values = np.asarray(values)
    if x.ndim == 2 and values.ndim == 1:
        if values.shape[0] != x.shape[0]:
            raise ValueError("batch of times must match batch of points")
        return values[:, None]
    return values


@dataclass(frozen=True)
class VPSchedule:
    """Linear-rate variance-preserving schedule with a variance floor.

    The noise rate grows linearly from ``beta_min`` at t=0 to ``beta_max``
    at t=1, so the perturbation-kernel mean coefficient is
    alpha_t = exp(-(beta_min*t + (beta_max-beta_min)*t^2/2) / 2) and the
    marginal variance is max(1 - alpha_t^2, sigma_min_sq).  The floor keeps
    the t=0 kernel non-degenerate so score targets stay bounded.
    """

    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_min_sq: float = 0.01

    def __post_init__(self):
        if self.beta_min <= 0 or self.beta_max <= 0:
            raise ValueError("beta endpoints must be positive")
        if self.beta_max < self.beta_min:
            raise ValueError("beta_max must be >= beta_min")
        if self.sigma_min_sq < 0:
            raise ValueError("sigma_min_sq must be nonnegative")

    def kernel_stats(self, t):
        """(alpha_t, sigma_t) of the perturbation kernel at time t."""
        t = _check_t(t)
        integral = self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t ** 2
        alpha = np.exp(-0.5 * integral)
        sigma = np.sqrt(np.maximum(1.0 - alpha ** 2, self.sigma_min_sq))
        if t.ndim == 0:
            return float(alpha), float(sigma)
        return alpha, sigma


@dataclass(frozen=True)
class FixedSchedule:
    """Single noise scale, no time dependence: alpha = 1, sigma constant."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def kernel_stats(self, t):
        t = _check_t(t)
        if t.ndim == 0:
            return 1.0, self.sigma
        return np.ones_like(t), np.full_like(t, self.sigma)


Schedule = Union[VPSchedule, FixedSchedule]


def kernel_stats(sched: Schedule, t):
    return sched.kernel_stats(t)


def perturb(sched: Schedule, x0: np.ndarray, t, noise: np.ndarray) -> np.ndarray:
    """Forward-process sample x_t = alpha_t * x0 + sigma_t * noise.

    The standard-normal ``noise`` is supplied by the caller so callers
    control determinism.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError("x0 and noise must have the same shape")
    alpha, sigma = sched.kernel_stats(t)
    return _per_row(alpha, x0) * x0 + _per_row(sigma, x0) * noise


def dsm_target(sched: Schedule, x0: np.ndarray, x_t: np.ndarray, t) -> np.ndarray:
    """Score of the perturbation kernel at x_t: -(x_t - alpha_t x0)/sigma_t^2."""
    x0 = np.asarray(x0, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if x0.shape != x_t.shape:
        raise ValueError("x0 and x_t must have the same shape")
    alpha, sigma = sched.kernel_stats(t)
    var = _per_row(np.asarray(sigma) ** 2, x_t)
    return -(x_t - _per_row(alpha, x0) * x0) / var


def weight(sched: Schedule, t):
    """Loss weighting lambda(t) = sigma_t^2, balancing scales across times."""
    _, sigma = sched.kernel_stats(t)
    return sigma ** 2


def decay(sched: Schedule, x0: np.ndarray, t) -> np.ndarray:
    """Deterministic forward decay alpha_t * x0 (perturb with zero noise)."""
    x0 = np.asarray(x0, dtype=np.float64)
    alpha, _ = sched.kernel_stats(t)
    return _per_row(alpha, x0) * x0


def schedule_id(sched: Schedule) -> str:
    """Whitespace-free token identifying a schedule, for file headers."""
    if isinstance(sched, VPSchedule):
        return "vp,{!r},{!r},{!r}".format(
            sched.beta_min, sched.beta_max, sched.sigma_min_sq)
    if isinstance(sched, FixedSchedule):
        return "fixed,{!r}".format(sched.sigma)
    raise TypeError(f"unknown schedule type {type(sched).__name__}")


def parse_schedule_id(token: str) -> Schedule:
    """Inverse of :func:`schedule_id`; round trips bit-exactly via repr."""
    fields = token.split(",")
    try:
        if fields[0] == "vp" and len(fields) == 4:
            return VPSchedule(*(float(v) for v in fields[1:]))
        if fields[0] == "fixed" and len(fields) == 2:
            return FixedSchedule(float(fields[1]))
    except ValueError as exc:
        raise ValueError(f"bad schedule token {token!r}") from exc
    raise ValueError(f"bad schedule token {token!r}")
