"""Per-point topological dimension estimates from a regularized score model.

A model trained with spectral-norm regularization strength gamma at noise
scale sigma learns, off the data manifold, an inverse slope of
sigma^2 + (n / n_perp) * gamma along the n_perp locally-normal directions.
Probing the model adversarially measures that slope, and inverting the
relationship yields the number of normal directions, hence the local
dimension n - n_perp.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attacks import AttackConfig, _pgd_l2_rows
from .diffusion import Schedule, decay, kernel_stats

DIVISION_GUARD = "division_guard"
NEGATIVE_NORMAL_VAR = "negative_normal_var"
ATTACK_FALLBACK = "attack_fallback"


@dataclass(frozen=True)
class TDEstimate:
    """One point's probe record and dimension estimate.

    ``delta`` is the measured score slope |s(x_adv) - s(x)| / |x_adv - x|,
    kept exactly as measured; ``n_hat`` is the raw inversion, which can
    leave [0, n] when the slope is off-model, and ``n_hat_clamped`` is the
    reported value.
    """

    x: np.ndarray
    x_adv: np.ndarray
    delta: float
    n_hat: float
    n_hat_clamped: float
    flags: frozenset

    @property
    def n_hat_rounded(self) -> int:
        return int(round(self.n_hat_clamped))


def invert_slope(delta: float, n: int, gamma: float,
                 sigma: float) -> tuple[float, float, frozenset]:
    """Dimension from a measured slope: (raw, clamped, flags).

    n_hat = n - n * gamma / (1/delta - sigma^2).  A denominator within
    1e-9 of zero means no detectable normal variance beyond the noise
    floor, reported as dimension n; a negative denominator (slope steeper
    than the noise floor allows) is clamped to n and flagged.
    """
    flags = set()
    with np.errstate(divide="ignore"):
        denom = (1.0 / delta if delta > 0 else np.inf) - sigma ** 2
    if abs(denom) < 1e-9:
        flags.add(DIVISION_GUARD)
        return float(n), float(n), frozenset(flags)
    n_hat = n - n * gamma / denom
    if denom < 0:
        flags.add(NEGATIVE_NORMAL_VAR)
        return float(n_hat), float(n), frozenset(flags)
    return (float(n_hat), float(min(max(n_hat, 0.0), float(n))),
            frozenset(flags))


def estimate_td(model, x: np.ndarray, gamma: float, sigma: float,
                attack_cfg: AttackConfig, t=None, rng=0) -> TDEstimate:
    """Estimate the local dimension at one point (budget fixed to sigma)."""
    (est,) = estimate_td_batch(model, np.atleast_2d(x), gamma, sigma,
                               attack_cfg, t, rng)
    return est


def estimate_td_batch(model, points: np.ndarray, gamma: float, sigma: float,
                      attack_cfg: AttackConfig, t=None,
                      rng=0) -> list[TDEstimate]:
    """Vectorized :func:`estimate_td` over rows of ``points``.

    The adversarial budget is pinned to the model's training noise scale:
    that is the radius on which the learned off-manifold slope is valid.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[1]
    cfg = replace(attack_cfg, epsilon=sigma,
                  step_size=None) if attack_cfg.epsilon != sigma else attack_cfg
    adv, fell_back = _pgd_l2_rows(model, points, t, cfg, rng)
    s_orig = np.atleast_2d(model(points, t))
    s_adv = np.atleast_2d(model(adv, t))
    move = np.linalg.norm(adv - points, axis=1)
    rise = np.linalg.norm(s_adv - s_orig, axis=1)
    estimates = []
    for i in range(points.shape[0]):
        if move[i] == 0.0:
            raise ValueError(f"null probe at point {i}: attack did not move")
        delta = float(rise[i] / move[i])
        n_hat, clamped, flags = invert_slope(delta, n, gamma, sigma)
        if fell_back[i]:
            flags = flags | {ATTACK_FALLBACK}
        estimates.append(TDEstimate(points[i].copy(), adv[i].copy(), delta,
                                    n_hat, clamped, flags))
    return estimates


def estimate_td_over_time(model, x: np.ndarray, times, gamma: float,
                          sched: Schedule, attack_cfg: AttackConfig,
                          rng=0) -> list[TDEstimate]:
    """Dimension estimates along the deterministic forward decay of x.

    For each requested time the point is decayed to alpha_t * x and probed
    with the marginal noise scale sigma_t; the regularization strength is
    kept constant in t.
    """
    if not model.time_conditioned:
        raise ValueError("per-time estimates need a time-conditioned model")
    times = list(times)
    if any(t0 > t1 for t0, t1 in zip(times, times[1:])):
        raise ValueError("times must be sorted ascending")
    x = np.asarray(x, dtype=np.float64)
    out = []
    for i, t in enumerate(times):
        x_t = decay(sched, x, t)
        _, sigma_t = kernel_stats(sched, t)
        out.append(estimate_td(model, x_t, gamma, float(sigma_t), attack_cfg,
                               t=t, rng=np.random.default_rng((rng, i))))
    return out


def evaluate_mse(estimates, truth) -> float:
    """Mean squared error of clamped estimates against integer labels."""
    truth = np.asarray(truth, dtype=np.float64)
    if len(estimates) == 0:
        raise ValueError("no estimates")
    if len(estimates) != truth.shape[0]:
        raise ValueError("estimates and truth differ in length")
    pred = np.array([e.n_hat_clamped for e in estimates])
    return float(np.mean((pred - truth) ** 2))


RESULTS_FLAG_ORDER = (DIVISION_GUARD, NEGATIVE_NORMAL_VAR, ATTACK_FALLBACK)


def write_results_csv(estimates, path, comment: str = None) -> None:
    """Per-point results: coordinates, probe coordinates, slope, estimates.

    Flags are joined with ``;`` in the last column.  An optional comment
    (e.g. a config fingerprint) is written as a leading ``#`` line.
    """
    if not estimates:
        raise ValueError("no estimates")
    n = estimates[0].x.shape[0]
    cols = (["index"] + [f"x{i}" for i in range(n)]
            + [f"adv{i}" for i in range(n)]
            + ["delta", "n_hat_raw", "n_hat_clamped", "flags"])
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(cols) + "\n")
        for i, e in enumerate(estimates):
            flags = ";".join(f for f in RESULTS_FLAG_ORDER if f in e.flags)
            row = ([str(i)] + [repr(float(v)) for v in e.x]
                   + [repr(float(v)) for v in e.x_adv]
                   + [repr(e.delta), repr(e.n_hat), repr(e.n_hat_clamped),
                      flags])
            fh.write(",".join(row) + "\n")
