"""L2-bounded adversarial probes against a score model.

The probe walks against the score field (toward lower model likelihood)
under a hard L2 budget; a random-direction probe of the same budget serves
as the baseline.  Both are deterministic given their seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class AttackConfig:
    """Projected gradient probe parameters.

    ``step_size`` defaults to 2 * epsilon / iters: deliberate over-stepping
    plus projection explores the budget boundary instead of stalling inside
    it.  The budget must be reachable: step_size * iters >= epsilon.
    """

    epsilon: float
    iters: int = 10
    step_size: float = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.step_size is None:
            object.__setattr__(self, "step_size", 2.0 * self.epsilon / self.iters)
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.step_size * self.iters < self.epsilon:
            raise ValueError("budget unreachable: step_size * iters < epsilon")


class ProbeResult(NamedTuple):
    x_adv: np.ndarray
    fallback: bool     # score vanished at some iterate; random direction used


def pgd_l2(model, x: np.ndarray, t, cfg: AttackConfig, rng=0) -> ProbeResult:
    """Iterative probe: step along the normalized negative score, project.

    Each step moves ``cfg.step_size`` along -s(x_cur, t)/|s| and then
    projects back onto the L2 ball of radius epsilon around the start, so
    |x_adv - x| <= epsilon always holds.  If the score vanishes at an
    iterate, a fixed random unit direction (drawn once from ``rng``)
    substitutes for that step and the result is flagged.
    """
    batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out, fallback = _pgd_l2_rows(model, batch, t, cfg, rng)
    if np.asarray(x).ndim == 1:
        return ProbeResult(out[0], bool(fallback.any()))
    return ProbeResult(out, fallback)


def _pgd_l2_rows(model, x: np.ndarray, t, cfg: AttackConfig, rng=0):
    """Vectorized probe over rows; returns (x_adv rows, per-row flags)."""
    rng = np.random.default_rng(rng) if not isinstance(
        rng, np.random.Generator) else rng
    x = np.asarray(x, dtype=np.float64)
    cur = x.copy()
    flags = np.zeros(x.shape[0], dtype=bool)
    fixed_dirs = None
    for _ in range(cfg.iters):
        s = np.atleast_2d(model(cur, t))
        norms = np.linalg.norm(s, axis=1, keepdims=True)
        dead = norms[:, 0] < 1e-300
        direction = np.divide(-s, norms, out=np.zeros_like(s),
                              where=norms > 0)
        if np.any(dead):
            if fixed_dirs is None:
                fixed_dirs = rng.standard_normal(x.shape)
                fixed_dirs /= np.linalg.norm(fixed_dirs, axis=1, keepdims=True)
            direction[dead] = fixed_dirs[dead]
            flags |= dead
        cur = cur + cfg.step_size * direction
        offset = cur - x
        dist = np.linalg.norm(offset, axis=1, keepdims=True)
        over = dist[:, 0] > cfg.epsilon
        if np.any(over):
            cur[over] = x[over] + offset[over] * (cfg.epsilon / dist[over])
    return cur, flags


def random_l2(x: np.ndarray, epsilon: float, seed=0) -> np.ndarray:
    """Baseline probe: x plus a uniform-on-the-sphere step of length epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rng = np.random.default_rng(seed) if not isinstance(
        seed, np.random.Generator) else seed
    x = np.asarray(x, dtype=np.float64)
    u = rng.standard_normal(x.shape)
    if x.ndim > 1:
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
    else:
        u /= np.linalg.norm(u)
    return x + epsilon * u
