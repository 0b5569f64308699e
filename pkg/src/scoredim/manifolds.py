"""Synthetic manifold datasets with per-point topological dimension labels.

Generators are pure functions of their parameters and seed.  Each generator
draws from independent spawned RNG streams per component, so e.g. the clean
coordinates of a noisy dataset are bit-identical to the noiseless variant
with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SWIRL_PHI_LO = np.pi / 2
SWIRL_PHI_HI = 3 * np.pi
SWIRL_RADIUS_RATE = 0.2  # spiral r = rate * phi; cloud spans roughly [-2, 2]


class DatasetFormatError(ValueError):
    """Raised when a dataset file cannot be parsed."""


@dataclass
class ManifoldSample:
    """Point cloud with ground-truth per-point topological dimension."""

    points: np.ndarray      # (count, ambient_dim) float64
    ambient_dim: int
    true_td: np.ndarray     # (count,) int
    name: str
    seed: int

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.true_td = np.asarray(self.true_td, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[1] != self.ambient_dim:
            raise ValueError("points must be (count, ambient_dim)")
        if self.true_td.shape != (self.points.shape[0],):
            raise ValueError("true_td length must equal point count")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if np.any(self.true_td < 0) or np.any(self.true_td > self.ambient_dim):
            raise ValueError("true_td entries must lie in [0, ambient_dim]")

    @property
    def count(self) -> int:
        return self.points.shape[0]


@dataclass
class NormalizationStats:
    """Per-coordinate affine transform fitted by :func:`normalize`."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (points - self.mean) / self.std

    def invert(self, points: np.ndarray) -> np.ndarray:
        return points * self.std + self.mean


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    """n independent child generators of a base seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def gen_swirl(count: int, noise_scale: float = 0.0, seed: int = 0) -> ManifoldSample:
    """2-D Archimedean spiral r = rate * phi, optionally with Gaussian noise.

    The angle is drawn as phi = lo + (hi - lo) * U^2 with U uniform, which
    concentrates samples toward the inner coil (non-uniform density along
    the curve).  Noise is isotropic N(0, noise_scale^2 I); the clean
    coordinates do not depend on noise_scale.  Every point has
    topological dimension 1.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if noise_scale < 0:
        raise ValueError("noise_scale must be nonnegative")
    rng_phi, rng_noise = _streams(seed, 2)
    u = rng_phi.random(count)
    phi = SWIRL_PHI_LO + (SWIRL_PHI_HI - SWIRL_PHI_LO) * u ** 2
    r = SWIRL_RADIUS_RATE * phi
    points = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    if noise_scale > 0:
        points = points + noise_scale * rng_noise.standard_normal((count, 2))
    name = "swirl" if noise_scale == 0 else f"swirl_noise{noise_scale:g}"
    return ManifoldSample(points, 2, np.ones(count, dtype=int), name, seed)


# LineDiskBall layout: unit segment along e1 centered at (-3, 0, 0), unit
# disk in the e1-e2 plane at the origin, unit ball centered at (+3, 0, 0).
LDB_SEGMENT_CENTER = -3.0
LDB_BALL_CENTER = 3.0


def gen_line_disk_ball(count: int, seed: int = 0) -> ManifoldSample:
    """Disjoint union of a segment (td 1), a disk (td 2) and a ball (td 3).

    Points are sampled uniformly within each component; component sizes are
    as equal as integer division allows.
    """
    if count < 3:
        raise ValueError("insufficient points for three components")
    base, rem = divmod(count, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]
    rng_seg, rng_disk, rng_ball = _streams(seed, 3)

    seg = np.zeros((sizes[0], 3))
    seg[:, 0] = LDB_SEGMENT_CENTER + rng_seg.random(sizes[0]) - 0.5

    disk = np.zeros((sizes[1], 3))
    radius = np.sqrt(rng_disk.random(sizes[1]))
    theta = 2 * np.pi * rng_disk.random(sizes[1])
    disk[:, 0] = radius * np.cos(theta)
    disk[:, 1] = radius * np.sin(theta)

    direction = rng_ball.standard_normal((sizes[2], 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    ball = rng_ball.random(sizes[2])[:, None] ** (1 / 3) * direction
    ball[:, 0] += LDB_BALL_CENTER

    points = np.vstack([seg, disk, ball])
    true_td = np.repeat([1, 2, 3], sizes)
    return ManifoldSample(points, 3, true_td, "line_disk_ball", seed)


def ldb_region_labels(points: np.ndarray) -> np.ndarray:
    """Geometric component membership for LineDiskBall points.

    Independent of the generator bookkeeping: components are separated
    along the first axis, so a threshold test recovers the labels.
    """
    x = points[:, 0]
    return np.where(x < -1.5, 1, np.where(x > 1.5, 3, 2))


def gen_hyper_twin_peaks(intrinsic_dim: int, count: int, seed: int = 0) -> ManifoldSample:
    """Smooth d-dimensional surface embedded in d+1 ambient dimensions.

    Points are (u, f(u)) with u uniform on [-1, 1]^d and
    f(u) = sum_i sin(pi u_i) cos(pi u_{i+1 mod d}), a multi-peak height
    field.  Every point has topological dimension d.
    """
    if intrinsic_dim < 1:
        raise ValueError("intrinsic_dim must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    (rng,) = _streams(seed, 1)
    u = rng.uniform(-1.0, 1.0, size=(count, intrinsic_dim))
    f = np.sum(np.sin(np.pi * u) * np.cos(np.pi * np.roll(u, -1, axis=1)), axis=1)
    points = np.column_stack([u, f])
    true_td = np.full(count, intrinsic_dim, dtype=int)
    return ManifoldSample(points, intrinsic_dim + 1,
                          true_td, f"hyper_twin_peaks{intrinsic_dim}", seed)


def gen_isotropic_gaussian(dim: int, variance: float, count: int, seed: int = 0) -> ManifoldSample:
    """i.i.d. draws from N(0, variance * I); full-rank, so td = dim."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if variance <= 0:
        raise ValueError("variance must be positive")
    (rng,) = _streams(seed, 1)
    points = np.sqrt(variance) * rng.standard_normal((count, dim))
    return ManifoldSample(points, dim, np.full(count, dim, dtype=int),
                          f"gaussian{dim}", seed)


def gen_isolated_point(dim: int, count: int) -> ManifoldSample:
    """``count`` copies of the origin; a point has topological dimension 0."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    points = np.zeros((count, dim))
    return ManifoldSample(points, dim, np.zeros(count, dtype=int),
                          "isolated_point", 0)


GENERATORS = {
    "swirl": gen_swirl,
    "line_disk_ball": gen_line_disk_ball,
    "hyper_twin_peaks": gen_hyper_twin_peaks,
    "gaussian": gen_isotropic_gaussian,
    "isolated_point": gen_isolated_point,
}


def normalize(sample: ManifoldSample):
    """Shift and scale each coordinate to zero mean and unit variance.

    Returns the normalized sample together with the stats needed to invert
    the transform.  Raises on any zero-variance coordinate (e.g. the
    isolated-point dataset); callers may drop or jitter such coordinates.
    """
    if sample.count < 2:
        raise ValueError("need at least 2 points to normalize")
    mean = sample.points.mean(axis=0)
    var = sample.points.var(axis=0)
    if np.any(var == 0.0):
        bad = int(np.flatnonzero(var == 0.0)[0])
        raise ValueError(f"degenerate coordinate {bad}: zero variance")
    stats = NormalizationStats(mean=mean, std=np.sqrt(var))
    normalized = ManifoldSample(stats.apply(sample.points), sample.ambient_dim,
                                sample.true_td, sample.name, sample.seed)
    return normalized, stats


def save_sample(sample: ManifoldSample, path) -> None:
    """Write a dataset file (bit-exact round trip via hexadecimal floats).

    Format: line 1 ``name ambient_dim count seed``, line 2 the true_td
    labels, then one point per line as space-separated C99 hex floats.
    """
    if any(ch.isspace() for ch in sample.name):
        raise ValueError("dataset name must not contain whitespace")
    lines = [f"{sample.name} {sample.ambient_dim} {sample.count} {sample.seed}",
             " ".join(str(int(v)) for v in sample.true_td)]
    for row in sample.points:
        lines.append(" ".join(float(v).hex() for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sample(path) -> ManifoldSample:
    """Read a dataset file written by :func:`save_sample`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2:
        raise DatasetFormatError("truncated file: missing header or labels")
    header = lines[0].split()
    if len(header) != 4:
        raise DatasetFormatError(f"malformed header: {lines[0]!r}")
    name = header[0]
    try:
        ambient_dim, count, seed = (int(v) for v in header[1:])
    except ValueError as exc:
        raise DatasetFormatError(f"malformed header: {lines[0]!r}") from exc
    td_fields = lines[1].split()
    if len(td_fields) != count:
        raise DatasetFormatError(
            f"expected {count} labels, found {len(td_fields)}")
    try:
        true_td = np.array([int(v) for v in td_fields], dtype=np.int64)
    except ValueError as exc:
        raise DatasetFormatError("labels must be integers") from exc
    body = lines[2:2 + count]
    if len(body) != count:
        raise DatasetFormatError(
            f"truncated file: expected {count} points, found {len(body)}")
    points = np.empty((count, ambient_dim))
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != ambient_dim:
            raise DatasetFormatError(
                f"point {i}: expected {ambient_dim} coordinates, found {len(fields)}")
        try:
            points[i] = [float.fromhex(v) for v in fields]
        except ValueError as exc:
            raise DatasetFormatError(f"point {i}: bad float field") from exc
    if not np.all(np.isfinite(points)):
        raise DatasetFormatError("non-finite values in points")
    try:
        return ManifoldSample(points, ambient_dim, true_td, name, seed)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc


def export_csv(sample: ManifoldSample, path) -> None:
    """Decimal CSV export for plotting; lossy, unlike the dataset format."""
    header = ",".join([f"x{i}" for i in range(sample.ambient_dim)] + ["true_td"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, td in zip(sample.points, sample.true_td):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(td)}\n")
