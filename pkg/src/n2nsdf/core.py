"""Point clouds, normalization, synthetic corruption and query sampling.

Every sampler here is a pure function of its inputs and an integer seed.
Random streams are derived from ``(seed, stream, index)`` so that, e.g.,
observation ``k`` of an observation set is reproducible regardless of the
order in which observations are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInput

# stream ids for seed derivation
STREAM_NOISE = 1
STREAM_QUERY = 2
STREAM_TARGET = 3
STREAM_TRAIN = 4
STREAM_UPSAMPLE = 5
STREAM_INIT = 6
STREAM_SURFACE = 7

NORMAL_TOL = 1e-6


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``seed`` and a stream path."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInput(f"expected an (n, 3) array of points, got shape {arr.shape}")
    return arr


@dataclass
class PointCloud:
    """Ordered 3D points with optional unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = as_points(self.points)
        if len(self.points) == 0:
            raise InvalidInput("point cloud is empty")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInput("point cloud contains non-finite coordinates")
        if self.normals is not None:
            self.normals = as_points(self.normals)
            if self.normals.shape != self.points.shape:
                raise InvalidInput("normals and points differ in length")
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise InvalidInput("normals must have unit length")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None


@dataclass(frozen=True)
class NormalizationTransform:
    """``normalized = (p - center) / scale``."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise InvalidInput("normalization scale must be positive")

    def apply(self, points) -> np.ndarray:
        return (as_points(points) - self.center) / self.scale

    def invert(self, points) -> np.ndarray:
        return as_points(points) * self.scale + self.center

    def apply_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.apply(cloud.points), cloud.normals)

    def invert_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.invert(cloud.points), cloud.normals)


@dataclass
class ObservationSet:
    observations: list[PointCloud]
    normalization: NormalizationTransform = field(default_factory=NormalizationTransform)

    def __post_init__(self):
        if len(self.observations) < 1:
            raise InvalidInput("an observation set needs at least one cloud")

    def __len__(self) -> int:
        return len(self.observations)


@dataclass
class QueryBatch:
    queries: np.ndarray
    source_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.queries)


def normalize_to_unit_sphere(cloud: PointCloud) -> tuple[PointCloud, NormalizationTransform]:
    """Center on the centroid and scale so the farthest point has norm 1."""
    if cloud is None or len(cloud.points) == 0:
        raise InvalidInput("cannot normalize an empty cloud")
    center = cloud.points.mean(axis=0)
    radius = float(np.max(np.linalg.norm(cloud.points - center, axis=1)))
    if radius == 0.0:
        radius = 1.0
    transform = NormalizationTransform(center, radius)
    return transform.apply_cloud(cloud), transform


def add_gaussian_noise(cloud: PointCloud, sigma_fraction: float, seed: int,
                       distribution: str = "gaussian") -> PointCloud:
    """Corrupt every point with isotropic zero-mean noise.

    ``sigma_fraction`` is the per-axis standard deviation in unit-sphere
    units. ``distribution="uniform"`` draws from a zero-mean box with the same
    standard deviation instead.
    """
    if sigma_fraction < 0:
        raise InvalidInput("noise standard deviation must be non-negative")
    if sigma_fraction == 0:
        return PointCloud(cloud.points.copy())
    rng = rng_for(seed, STREAM_NOISE)
    shape = cloud.points.shape
    if distribution == "gaussian":
        noise = rng.normal(0.0, sigma_fraction, size=shape)
    elif distribution == "uniform":
        half = sigma_fraction * np.sqrt(3.0)
        noise = rng.uniform(-half, half, size=shape)
    else:
        raise InvalidInput(f"unknown noise distribution {distribution!r}")
    return PointCloud(cloud.points + noise)


def make_observation_set(clean: PointCloud, n_obs: int, sigma_fraction: float, seed: int,
                         distribution: str = "gaussian") -> ObservationSet:
    if n_obs < 1:
        raise InvalidInput("n_obs must be at least 1")
    seeds = np.random.SeedSequence([int(seed), STREAM_NOISE]).generate_state(n_obs, dtype=np.uint64)
    observations = [
        add_gaussian_noise(clean, sigma_fraction, int(seeds[k]), distribution) for k in range(n_obs)
    ]
    return ObservationSet(observations)


def observation_set_from_clouds(clouds: list[PointCloud]) -> ObservationSet:
    """Normalize raw observations into the unit-sphere frame of the first one."""
    if not clouds:
        raise InvalidInput("no observations given")
    _, transform = normalize_to_unit_sphere(clouds[0])
    return ObservationSet([transform.apply_cloud(c) for c in clouds], transform)


def kth_neighbor_distance(points: np.ndarray, k: int) -> np.ndarray:
    """Distance from every point to its k-th nearest *other* point."""
    n = len(points)
    if not 1 <= k < n:
        raise InvalidInput(f"k_neighbor must be in [1, {n - 1}], got {k}")
    dist, _ = cKDTree(points).query(points, k=k + 1)
    return dist[:, k]


def sample_queries(cloud: PointCloud, batch: int, k_neighbor: int, seed: int,
                   scales: np.ndarray | None = None) -> QueryBatch:
    """Gaussian queries around randomly chosen parent points.

    The per-parent standard deviation is the distance to the parent's
    ``k_neighbor``-th nearest neighbour; pass precomputed ``scales`` to skip
    the k-d tree query when sampling repeatedly from one cloud.
    """
    if batch < 1:
        raise InvalidInput("batch must be at least 1")
    if scales is None:
        scales = kth_neighbor_distance(cloud.points, k_neighbor)
    elif not 1 <= k_neighbor < len(cloud):
        raise InvalidInput(f"k_neighbor must be in [1, {len(cloud) - 1}], got {k_neighbor}")
    rng = rng_for(seed, STREAM_QUERY)
    parents = rng.integers(0, len(cloud), size=batch)
    offsets = rng.standard_normal((batch, 3)) * scales[parents, None]
    return QueryBatch(cloud.points[parents] + offsets, parents)


def sample_target_batch(cloud: PointCloud, batch: int, seed: int, replace: bool = True) -> PointCloud:
    if cloud is None or len(cloud.points) == 0:
        raise InvalidInput("cannot sample from an empty cloud")
    if batch < 1:
        raise InvalidInput("batch must be at least 1")
    rng = rng_for(seed, STREAM_TARGET)
    if replace:
        idx = rng.integers(0, len(cloud), size=batch)
    else:
        if batch > len(cloud):
            raise InvalidInput("batch exceeds cloud size when sampling without replacement")
        idx = rng.permutation(len(cloud))[:batch]
    normals = None if cloud.normals is None else cloud.normals[idx]
    return PointCloud(cloud.points[idx], normals)


def nearest_neighbors(queries: np.ndarray, reference: np.ndarray,
                      tree: cKDTree | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nearest reference point for each query; exact ties go to the lowest index."""
    queries = as_points(queries)
    reference = as_points(reference)
    tree = tree or cKDTree(reference)
    k = min(8, len(reference))
    dist, idx = tree.query(queries, k=k)
    if k == 1:
        return dist, idx
    best = dist[:, :1]
    tied = dist == best
    idx_masked = np.where(tied, idx, np.iinfo(np.int64).max)
    out_idx = idx_masked.min(axis=1)
    # all k candidates tied: widen the search for those rows
    for row in np.nonzero(tied[:, -1])[0]:
        cand = tree.query_ball_point(queries[row], best[row, 0] * (1 + 1e-12) + 1e-300)
        cand = np.asarray(cand, dtype=np.int64)
        d = np.linalg.norm(reference[cand] - queries[row], axis=1)
        out_idx[row] = cand[d == d.min()].min()
    return best[:, 0], out_idx


def sphere_points(n: int, radius: float = 1.0) -> PointCloud:
    """Near-uniform Fibonacci lattice on a sphere, with outward normals."""
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azimuth = np.pi * (1.0 + np.sqrt(5.0)) * i
    normals = np.stack([np.cos(azimuth) * np.sin(polar),
                        np.sin(azimuth) * np.sin(polar),
                        np.cos(polar)], axis=1)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(radius * normals, normals)


def circle_points(m: int, radius: float = 1.0) -> PointCloud:
    """``m`` evenly spaced points on a circle in the z = 0 plane."""
    t = 2.0 * np.pi * np.arange(m) / m
    return PointCloud(np.stack([radius * np.cos(t), radius * np.sin(t), np.zeros(m)], axis=1))
