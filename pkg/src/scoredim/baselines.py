"""Classical kNN intrinsic dimension estimators and their shared search.

Exact brute-force neighbor search: at the dataset sizes used here (about a
thousand points) a partial sort beats tree structures and, more important,
makes tie-breaking deterministic (by index order), which keeps every
estimate reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np


class KNNIndex:
    """Exact Euclidean k-nearest-neighbor queries over a fixed point set."""

    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 2:
            raise ValueError("need a 2-D array with at least 2 points")
        self.points = points
        self._sq_norms = np.sum(points ** 2, axis=1)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def _distances_from(self, i: int) -> np.ndarray:
        d_sq = (self._sq_norms - 2.0 * (self.points @ self.points[i])
                + self._sq_norms[i])
        return np.sqrt(np.maximum(d_sq, 0.0))

    def query(self, i: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest other points to dataset member i.

        Returns (ascending distances, indices); equal distances are
        ordered by index.
        """
        if not 0 <= i < self.count:
            raise IndexError("point index out of range")
        if not 1 <= k < self.count:
            raise ValueError("need 1 <= k < count")
        dist = self._distances_from(i)
        dist[i] = np.inf
        chosen = np.lexsort((np.arange(self.count), dist))[:k]
        return dist[chosen], chosen


def knn_distances(index: KNNIndex, i: int, k: int) -> np.ndarray:
    """Sorted distances T_1 <= ... <= T_k from point i to its neighbors."""
    dist, _ = index.query(i, k)
    return dist


def _all_knn_distances(points: np.ndarray, k: int) -> np.ndarray:
    """(count, k) matrix of sorted neighbor distances, self excluded."""
    index = points if isinstance(points, KNNIndex) else KNNIndex(points)
    return np.vstack([knn_distances(index, i, k) for i in range(index.count)])


def mle_levina_bickel(points, k: int, mackay_correction: bool = False) -> np.ndarray:
    """Per-point maximum-likelihood dimension from neighbor distance ratios.

    The estimate at point i is the reciprocal of the mean of
    ln(T_k / T_j) over j < k, with denominator k-1 (or k-2 under the
    bias correction).  Points with a zero distance among their k
    neighbors (duplicates) get NaN; aggregate with nanmean.

    Parameters
    ----------
    points : (count, dim) array or KNNIndex
    k : neighborhood size, at least 3 (4 with the correction).
    mackay_correction : use the k-2 denominator variant.
    """
    denom = k - 2 if mackay_correction else k - 1
    if denom < 2:
        raise ValueError("k too small for this variant")
    dist = _all_knn_distances(points, k)
    bad = dist[:, 0] == 0.0
    estimates = np.full(dist.shape[0], np.nan)
    good = ~bad
    with np.errstate(divide="ignore"):
        logs = np.log(dist[good, -1:] / dist[good, :-1])
    estimates[good] = denom / np.sum(logs, axis=1)
    return estimates


def mind_ml(points, k: int) -> int:
    """Global integer dimension maximizing the neighbor-ratio likelihood.

    For each point the ratio rho = T_1 / T_k has density
    k * d * rho^(d-1) * (1 - rho^d)^(k-1) under dimension d; the estimate
    is the integer d in [1, ambient] with the largest summed log-likelihood.
    Points with T_1 = 0 carry no ratio information and are dropped.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    index = points if isinstance(points, KNNIndex) else KNNIndex(points)
    ambient = index.points.shape[1]
    dist = _all_knn_distances(index, k)
    keep = dist[:, 0] > 0.0
    if not np.any(keep):
        raise ValueError("all points excluded (duplicate-dominated data)")
    rho = dist[keep, 0] / dist[keep, -1]
    rho = np.clip(rho, None, 1.0 - 1e-12)
    log_rho = np.log(rho)
    best_d, best_ll = 1, -np.inf
    for d in range(1, ambient + 1):
        ll = np.sum(np.log(k * d) + (d - 1) * log_rho
                    + (k - 1) * np.log1p(-rho ** d))
        if ll > best_ll:
            best_d, best_ll = d, ll
    return best_d


def baseline_mse(estimates: np.ndarray, truth) -> float:
    """MSE of per-point estimates against integer labels, NaNs excluded."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimates.shape != truth.shape:
        raise ValueError("length mismatch")
    good = ~np.isnan(estimates)
    if not np.any(good):
        raise ValueError("no valid estimates")
    return float(np.mean((estimates[good] - truth[good]) ** 2))


def write_baseline_csv(method: str, k: int, estimates, path,
                       comment: str = None) -> None:
    """Per-point baseline results: index, method, k, estimate."""
    estimates = np.asarray(estimates, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("index,method,k,estimate\n")
        for i, e in enumerate(estimates):
            value = "" if np.isnan(e) else repr(float(e))
            fh.write(f"{i},{method},{k},{value}\n")
