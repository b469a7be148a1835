"""Consumers of a signed distance field: pulling, denoising, upsampling, grids.

Any object with an ``evaluate(points) -> (values, gradients)`` method works as
a field; :class:`~n2nsdf.network.SdfNetwork` and :class:`SphereField` both do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import STREAM_UPSAMPLE, PointCloud, add_gaussian_noise, as_points
from .errors import CorruptFile, InvalidInput

GRAD_EPS = 1e-8
DEFAULT_BOUND = 1.1
GRID_MAGIC = "n2nsdf-grid"
GRID_VERSION = 1


class SphereField:
    """Exact signed distance to a sphere, negative inside."""

    def __init__(self, radius: float = 1.0, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=np.float64)

    def evaluate(self, points):
        rel = as_points(points) - self.center
        r = np.linalg.norm(rel, axis=1)
        safe = np.where(r > 0, r, 1.0)
        grads = np.where(r[:, None] > 0, rel / safe[:, None], np.array([1.0, 0.0, 0.0]))
        return r - self.radius, grads

    def __call__(self, points):
        return self.evaluate(points)[0]


def pull_points(field, points, level: float = 0.0) -> np.ndarray:
    """Move each point by ``-(f - level) * grad f / max(|grad f|, eps)``."""
    pts = as_points(points)
    values, grads = field.evaluate(pts)
    norms = np.maximum(np.linalg.norm(grads, axis=1, keepdims=True), GRAD_EPS)
    return pts - (values - level)[:, None] * grads / norms


def denoise(field, noisy: PointCloud, passes: int = 1) -> PointCloud:
    if passes < 1:
        raise InvalidInput("passes must be at least 1")
    pts = noisy.points
    for _ in range(passes):
        pts = pull_points(field, pts)
    return PointCloud(pts)


def level_set_points(field, level: float, seeds: PointCloud, passes: int = 1) -> PointCloud:
    if passes < 1:
        raise InvalidInput("passes must be at least 1")
    pts = seeds.points
    for _ in range(passes):
        pts = pull_points(field, pts, level)
    return PointCloud(pts)


def upsample(field, sparse: PointCloud, rate: int = 4, sigma_fraction: float = 0.01,
             seed: int = 0, passes: int = 1) -> PointCloud:
    """Denoise ``rate`` independently jittered copies of ``sparse`` and concatenate them."""
    if rate < 1:
        raise InvalidInput("rate must be at least 1")
    seeds = np.random.SeedSequence([int(seed), STREAM_UPSAMPLE]).generate_state(rate, dtype=np.uint64)
    copies = [denoise(field, add_gaussian_noise(sparse, sigma_fraction, int(s)), passes).points
              for s in seeds]
    return PointCloud(np.concatenate(copies, axis=0))


@dataclass
class ScalarGrid:
    """Field samples on the corner lattice of an axis-aligned box.

    ``values[i, j, k]`` is the sample at ``lo + (i, j, k) * spacing``.
    Flattened (and serialized) order is x-fastest, i.e. Fortran order.
    """

    values: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise InvalidInput("grid needs at least 2 samples per axis")
        if np.any(self.hi <= self.lo):
            raise InvalidInput("grid bounds are empty")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.asarray(self.shape) - 1)

    def lattice_points(self) -> np.ndarray:
        """All lattice coordinates in x-fastest order, shape ``(n, 3)``."""
        axes = [self.lo[a] + np.arange(self.shape[a]) * self.spacing[a] for a in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx.ravel(order="F"), gy.ravel(order="F"), gz.ravel(order="F")], axis=1)

    def flat(self) -> np.ndarray:
        return self.values.ravel(order="F")


def evaluate_grid(field, resolution: int, bounds=None) -> ScalarGrid:
    """Sample ``field`` on a ``resolution^3`` lattice; default box is ``[-1.1, 1.1]^3``."""
    if resolution < 2:
        raise InvalidInput("resolution must be at least 2")
    if bounds is None:
        lo, hi = np.full(3, -DEFAULT_BOUND), np.full(3, DEFAULT_BOUND)
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=np.float64), (3,)) for b in bounds)
    shape = (resolution,) * 3
    empty = ScalarGrid(np.zeros(shape), lo, hi)
    values, _ = field.evaluate(empty.lattice_points())
    return ScalarGrid(values.reshape(shape, order="F"), lo, hi)


def save_grid(grid: ScalarGrid, path) -> None:
    nx, ny, nz = grid.shape
    header = (f"{GRID_MAGIC} {GRID_VERSION}\n"
              f"resolution {nx} {ny} {nz}\n"
              f"bounds {' '.join(repr(float(v)) for v in (*grid.lo, *grid.hi))}\n"
              "data float32 little-endian x-fastest\n"
              "end_header\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(grid.flat().astype("<f4").tobytes())


def load_grid(path) -> ScalarGrid:
    with open(path, "rb") as fh:
        lines = [fh.readline().decode("ascii", errors="replace").split() for _ in range(5)]
        body = fh.read()
    try:
        if lines[0][0] != GRID_MAGIC or lines[4] != ["end_header"]:
            raise ValueError("bad header")
        shape = tuple(int(v) for v in lines[1][1:4])
        bounds = [float(v) for v in lines[2][1:7]]
    except (IndexError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    data = np.frombuffer(body, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise CorruptFile(f"{path}: expected {int(np.prod(shape))} samples, found {data.size}")
    return ScalarGrid(data.astype(np.float64).reshape(shape, order="F"), bounds[:3], bounds[3:])


def sphere_grid(resolution: int, radius: float = 1.0, bound: float = 1.2) -> ScalarGrid:
    """Exact sphere SDF sampled on ``[-bound, bound]^3``."""
    return evaluate_grid(SphereField(radius), resolution, (-bound, bound))

