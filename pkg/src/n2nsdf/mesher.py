"""Marching cubes and exact point-to-triangle-mesh distances.

The triangulation uses the classic 256-case table with complementary
symmetry: case ``255 - c`` is case ``c`` with reversed winding. Ambiguous
face configurations are resolved by the table alone (no asymptotic decider),
so cracks can appear where two neighbouring cells resolve a shared ambiguous
face differently. Fields sampled from smooth closed surfaces at adequate
resolution do not produce such faces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._mc_tables import CORNERS, EDGES, TRIANGLES
from .core import PointCloud, STREAM_SURFACE, as_points, rng_for
from .errors import EmptyMesh, InvalidInput

ZERO_NUDGE = 1e-12


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise InvalidInput("triangle index out of range")
        if self.vertex_normals is None or len(self.vertex_normals) != len(self.vertices):
            self.vertex_normals = _area_weighted_normals(self.vertices, self.triangles)
        else:
            self.vertex_normals = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def face_normals(self) -> np.ndarray:
        cross = self._cross()
        norm = np.linalg.norm(cross, axis=1, keepdims=True)
        return cross / np.where(norm > 0, norm, 1.0)

    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    def _cross(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return np.cross(b - a, c - a)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles use each one."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def is_watertight(self) -> bool:
        if self.is_empty:
            return False
        _, counts = self.edges()
        return bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        edges, _ = self.edges()
        return int(len(used) - len(edges) + len(self.triangles))

    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)

    def sample_surface(self, n: int, seed: int = 0) -> PointCloud:
        """Area-weighted uniform samples carrying the face normal of their triangle."""
        if self.is_empty:
            raise InvalidInput("cannot sample an empty mesh")
        rng = rng_for(seed, STREAM_SURFACE)
        areas = self.areas()
        face = rng.choice(len(areas), size=n, p=areas / areas.sum())
        u, v = rng.random(n), rng.random(n)
        flip = u + v > 1
        u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
        a, b, c = (self.vertices[self.triangles[face, k]] for k in range(3))
        pts = a + u[:, None] * (b - a) + v[:, None] * (c - a)
        normals = self.face_normals()[face]
        good = np.linalg.norm(normals, axis=1) > 0.5
        return PointCloud(pts[good], normals[good])


def _area_weighted_normals(vertices, triangles) -> np.ndarray:
    normals = np.zeros_like(vertices)
    if len(triangles):
        a, b, c = (vertices[triangles[:, k]] for k in range(3))
        cross = np.cross(b - a, c - a)
        for k in range(3):
            np.add.at(normals, triangles[:, k], cross)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    return np.where(norm > 0, normals / np.where(norm > 0, norm, 1.0), 0.0)


def _effective_table():
    # the source table winds toward the "below level" corners; reverse every
    # triangle so normals face increasing values. Complements are left as the
    # table has them: forcing case c and 255 - c to mirror each other resolves
    # ambiguous faces differently in neighbouring cells and opens cracks.
    table = np.full((256, 15), -1, dtype=np.int64)
    counts = np.zeros(256, dtype=np.int64)
    for case in range(256):
        base = TRIANGLES[case]
        tris = []
        for k in range(0, len(base), 3):
            tris += [base[k], base[k + 2], base[k + 1]]
        table[case, :len(tris)] = tris
        counts[case] = len(tris) // 3
    return table, counts


_TABLE, _COUNTS = _effective_table()
_CORNERS = np.asarray(CORNERS, dtype=np.int64)
# each edge as (offset of its lower corner, axis)
_EDGE_BASE = np.asarray([np.minimum(_CORNERS[a], _CORNERS[b]) for a, b in EDGES], dtype=np.int64)
_EDGE_AXIS = np.asarray([int(np.argmax(np.abs(_CORNERS[b] - _CORNERS[a]))) for a, b in EDGES], dtype=np.int64)


def marching_cubes(grid, level: float = 0.0) -> TriangleMesh:
    """Triangulate ``{x : field(x) = level}`` from a :class:`~n2nsdf.field.ScalarGrid`.

    Triangles are wound so that their normals point toward increasing field
    values (outward for fields that are negative inside). Vertex normals are
    the central-difference field gradient interpolated along each edge.
    Returns an empty mesh and emits :class:`EmptyMesh` when the level is not
    crossed.
    """
    vals = np.asarray(grid.values, dtype=np.float64) - level
    vals = np.where(vals == 0.0, ZERO_NUDGE, vals)
    nx, ny, nz = vals.shape
    inside = vals < 0

    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        case |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << c
    active = np.nonzero((case > 0) & (case < 255))
    if active[0].size == 0:
        warnings.warn(f"level {level} is not crossed by the grid; mesh is empty", EmptyMesh, stacklevel=2)
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3)))

    cell = np.stack(active, axis=1)
    cell_case = case[active]
    ntri = _COUNTS[cell_case]
    rep_cell = np.repeat(np.arange(len(cell)), ntri)
    tri_no = np.arange(len(rep_cell)) - np.repeat(np.cumsum(ntri) - ntri, ntri)
    edge_ids = np.stack([_TABLE[cell_case[rep_cell], 3 * tri_no + k] for k in range(3)], axis=1)

    # global edge key: lattice index of the lower corner * 3 + axis
    base = cell[rep_cell][:, None, :] + _EDGE_BASE[edge_ids]
    keys = ((base[..., 0] * ny + base[..., 1]) * nz + base[..., 2]) * 3 + _EDGE_AXIS[edge_ids]
    unique_keys, inverse = np.unique(keys.ravel(), return_inverse=True)
    triangles = inverse.reshape(-1, 3)

    axis = unique_keys % 3
    lin = unique_keys // 3
    p0 = np.stack([lin // (ny * nz), (lin // nz) % ny, lin % nz], axis=1)
    p1 = p0 + np.eye(3, dtype=np.int64)[axis]
    v0 = vals[p0[:, 0], p0[:, 1], p0[:, 2]]
    v1 = vals[p1[:, 0], p1[:, 1], p1[:, 2]]
    t = v0 / (v0 - v1)
    spacing = np.asarray(grid.spacing)
    vertices = np.asarray(grid.lo) + (p0 + t[:, None] * (p1 - p0)) * spacing

    gradient = np.stack(np.gradient(vals, *spacing), axis=-1)
    g = (1 - t)[:, None] * gradient[p0[:, 0], p0[:, 1], p0[:, 2]] + t[:, None] * gradient[p1[:, 0], p1[:, 1], p1[:, 2]]
    gnorm = np.linalg.norm(g, axis=1, keepdims=True)
    fallback = _area_weighted_normals(vertices, triangles)
    normals = np.where(gnorm > 0, g / np.where(gnorm > 0, gnorm, 1.0), fallback)

    mesh = TriangleMesh(vertices, triangles, normals)
    area = mesh.areas()
    if np.any(area == 0):
        mesh = TriangleMesh(vertices, triangles[area > 0], normals)
    return mesh


# point-to-mesh distances ----------------------------------------------------

def closest_points_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest point of triangle ``(a, b, c)`` to ``p``, row by row."""
    ab, ac, ap = b - a, c - a, p - a
    dot = lambda u, v: np.einsum("ij,ij->i", u, v)  # noqa: E731
    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        sel = mask & ~done
        out[sel] = value[sel]
        done[sel] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), a)
        assign((d3 >= 0) & (d4 <= d3), b)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + (d1 / (d1 - d3))[:, None] * ab)
        assign((d6 >= 0) & (d5 <= d6), c)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + (d2 / (d2 - d6))[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        assign(np.ones(len(p), dtype=bool), a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None])
    return out


class MeshDistance:
    """Exact unsigned distance queries against a fixed triangle mesh."""

    def __init__(self, mesh: TriangleMesh):
        if mesh.is_empty:
            raise InvalidInput("distance to an empty mesh")
        self.mesh = mesh
        self._a, self._b, self._c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
        centroids = (self._a + self._b + self._c) / 3.0
        self._radius = float(max(np.linalg.norm(x - centroids, axis=1).max() for x in (self._a, self._b, self._c)))
        self._centroid_tree = cKDTree(centroids)
        used = np.unique(mesh.triangles)
        self._vertex_tree = cKDTree(mesh.vertices[used])

    def __call__(self, points, chunk: int = 4096) -> np.ndarray:
        pts = as_points(points)
        out = np.empty(len(pts))
        for start in range(0, len(pts), chunk):
            out[start:start + chunk] = self._chunk(pts[start:start + chunk])
        return out

    def _chunk(self, pts):
        upper, _ = self._vertex_tree.query(pts)
        cands = self._centroid_tree.query_ball_point(pts, upper + self._radius + 1e-12)
        sizes = np.fromiter((len(c) for c in cands), dtype=np.int64, count=len(pts))
        owner = np.repeat(np.arange(len(pts)), sizes)
        tri = np.concatenate([np.asarray(c, dtype=np.int64) for c in cands]) if len(owner) else np.zeros(0, np.int64)
        p = pts[owner]
        q = closest_points_on_triangles(p, self._a[tri], self._b[tri], self._c[tri])
        d = np.linalg.norm(p - q, axis=1)
        best = np.full(len(pts), np.inf)
        np.minimum.at(best, owner, d)
        return np.minimum(best, upper)


def point_to_mesh_distance(p, mesh: TriangleMesh) -> float:
    return float(MeshDistance(mesh)(np.asarray(p, dtype=np.float64)[None, :])[0])
