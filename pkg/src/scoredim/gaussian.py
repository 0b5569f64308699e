"""Closed-form Gaussian machinery: exact scores, entropy, KL divergence, and
the linear fixed point of the regularized score-matching criterion.

Everything in this module is analytic and deterministic, so it can serve as
ground truth for the learned components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GaussianDensity:
    """Multivariate Gaussian N(mean, cov).

    ``cov`` may be a full symmetric positive-definite matrix or a positive
    scalar (isotropic fast path, cov = scalar * I).
    """

    mean: np.ndarray
    cov: np.ndarray | float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        if np.ndim(self.cov) == 0:
            if float(self.cov) <= 0.0:
                raise ValueError("isotropic variance must be positive")
        else:
            self.cov = np.asarray(self.cov, dtype=float)
            if self.cov.shape != (self.mean.size, self.mean.size):
                raise ValueError("covariance shape does not match mean")
            if not np.allclose(self.cov, self.cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
            if np.linalg.eigvalsh(self.cov).min() <= 0.0:
                raise ValueError("covariance must be positive definite")

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_score(g: GaussianDensity, x) -> np.ndarray:
    """Exact score of a Gaussian density: -cov^{-1} (x - mean)."""
    x = np.asarray(x, dtype=float)
    if x.shape != g.mean.shape:
        raise ValueError(f"x has shape {x.shape}, expected {g.mean.shape}")
    d = x - g.mean
    if np.ndim(g.cov) == 0:
        return -d / float(g.cov)
    return -np.linalg.solve(g.cov, d)


def gaussian_entropy(g: GaussianDensity) -> float:
    """Differential entropy in nats: (k/2) log(2 pi e) + (1/2) log det cov."""
    k = g.dim
    if np.ndim(g.cov) == 0:
        logdet = k * np.log(float(g.cov))
    else:
        sign, logdet = np.linalg.slogdet(g.cov)
        if sign <= 0:
            raise ValueError("covariance must be positive definite")
    return 0.5 * k * np.log(2.0 * np.pi * np.e) + 0.5 * logdet


def kl_isotropic(sigma1_sq: float, sigma2_sq: float, k: int) -> float:
    """KL( N(0, sigma1_sq I) || N(0, sigma2_sq I) ) in k dimensions."""
    if sigma1_sq <= 0 or sigma2_sq <= 0:
        raise ValueError("variances must be positive")
    r = sigma1_sq / sigma2_sq
    return 0.5 * k * (r - 1.0 + np.log(1.0 / r))


@dataclass(frozen=True)
class LocalSplit:
    """Local tangent/normal split of an n-dimensional ambient space.

    The normal subspace has dimension ``n_perp`` and carries isotropic
    Gaussian noise of variance ``sigma_sq``; ``gamma`` is the strength of
    the spectral-norm (Dirichlet energy) regularizer, applied at level
    n * gamma.
    """

    n: int
    n_perp: int
    sigma_sq: float
    gamma: float

    def __post_init__(self):
        if not (0 < self.n_perp <= self.n):
            raise ValueError("need 0 < n_perp <= n")
        if self.sigma_sq <= 0:
            raise ValueError("sigma_sq must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def fixed_point_slope(split: LocalSplit) -> float:
    """Predicted normal-direction score slope of the regularized optimum.

    A score model trained with regularization level n*gamma on data whose
    normal noise is N(0, sigma_sq I) in n_perp dimensions ends up with
    normal variance sigma_sq + (n / n_perp) * gamma; the score slope is its
    inverse.
    """
    return 1.0 / (split.sigma_sq + (split.n / split.n_perp) * split.gamma)


def _criterion_grad(A: np.ndarray, b: np.ndarray, split: LocalSplit):
    """Value and gradient of the regularized quadratic criterion.

    J(A, b) = E_{x ~ N(0, sigma_sq I)} ||b + (A + I/sigma_sq) x||^2
              + (n / n_perp) * gamma * tr(A'A)

    The expectation is evaluated in closed form:
    E ||b + M x||^2 = ||b||^2 + sigma_sq * ||M||_F^2.
    """
    s2 = split.sigma_sq
    c = (split.n / split.n_perp) * split.gamma
    M = A + np.eye(split.n_perp) / s2
    value = float(b @ b + s2 * np.sum(M * M) + c * np.sum(A * A))
    grad_A = 2.0 * s2 * M + 2.0 * c * A
    grad_b = 2.0 * b
    return value, grad_A, grad_b


def solve_linear_fixed_point(split: LocalSplit, tol: float = 1e-8,
                             seed: int = 0, max_iters: int = 1_000_000):
    """Minimize the regularized quadratic criterion by gradient descent.

    Starts from a random SPD-perturbed matrix and a random offset vector and
    descends deterministically until the gradient certifies a distance to
    the minimizer below ``tol``.  Returns the converged ``(A, b)``; at the
    optimum A = -I / (sigma_sq + (n / n_perp) * gamma) and b = 0.

    Raises RuntimeError if the iteration cap is hit first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    k = split.n_perp
    s2 = split.sigma_sq
    c = (split.n / split.n_perp) * split.gamma

    # Random SPD perturbation around a generic start.
    Q = rng.standard_normal((k, k))
    A = -np.eye(k) + 0.1 * (Q @ Q.T)
    b = rng.standard_normal(k)

    # The criterion is an isotropic quadratic: curvature 2*(s2 + c) in A and
    # 2 in b.  Step sizes are set per block from those curvatures; the
    # gradient norm then bounds the remaining distance to the optimum.
    step_A = 0.25 / (s2 + c)
    step_b = 0.25

    for _ in range(max_iters):
        _, grad_A, grad_b = _criterion_grad(A, b, split)
        dist_A = np.linalg.norm(grad_A) / (2.0 * (s2 + c))
        dist_b = np.linalg.norm(grad_b) / 2.0
        if dist_A < 0.1 * tol and dist_b < 0.1 * tol:
            return A, b
        A = A - step_A * grad_A
        b = b - step_b * grad_b

    residual = np.linalg.norm(grad_A) + np.linalg.norm(grad_b)
    raise RuntimeError(
        f"fixed-point descent did not converge: gradient residual {residual:.3e}")


class LinearScore:
    """Axis-aligned linear score map s(x) = -slopes * x.

    Implements the same (forward, input-VJP) interface as a trained score
    network, so it can drive the attack and estimation code directly.
    """

    def __init__(self, slopes):
        self.slopes = np.asarray(slopes, dtype=float)
        self.ambient_dim = self.slopes.size

    def __call__(self, x, t=None):
        return -self.slopes * np.asarray(x, dtype=float)

    def forward(self, x, t=None):
        return self(x, t)

    def vjp_input(self, x, t, v):
        # Jacobian is the constant diagonal -diag(slopes).
        return -self.slopes * np.asarray(v, dtype=float)


def build_anisotropic_oracle_score(split: LocalSplit, tangent_scale: float) -> LinearScore:
    """Exact linear score at the regularized fixed point of a local split.

    The first ``n_perp`` coordinates are normal directions with slope
    ``fixed_point_slope(split)``; the remaining tangent coordinates have
    slope ``tangent_scale``, which must be strictly smaller so the normal
    directions dominate the Jacobian spectrum.
    """
    if tangent_scale < 0:
        raise ValueError("tangent_scale must be nonnegative")
    normal = fixed_point_slope(split)
    if tangent_scale >= normal:
        raise ValueError(
            f"tangent_scale {tangent_scale} must be < normal slope {normal}")
    slopes = np.full(split.n, tangent_scale, dtype=float)
    slopes[:split.n_perp] = normal
    return LinearScore(slopes)
