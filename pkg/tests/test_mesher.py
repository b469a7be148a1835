import warnings

import numpy as np
import pytest

from n2nsdf.errors import EmptyMesh, InvalidInput
from n2nsdf.field import ScalarGrid, sphere_grid
from n2nsdf.mesher import TriangleMesh, closest_points_on_triangles, marching_cubes, point_to_mesh_distance, \
    MeshDistance


def segment_closest(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return a + t * ab


def triangle_distance_reference(p, a, b, c):
    """Independent exact reference: interior projection if it lands inside, else the best edge point."""
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    proj = p - np.dot(p - a, n) * n
    m = np.column_stack([b - a, c - a])
    uv, *_ = np.linalg.lstsq(m, proj - a, rcond=None)
    if uv[0] >= 0 and uv[1] >= 0 and uv.sum() <= 1:
        return np.linalg.norm(p - proj)
    return min(np.linalg.norm(p - segment_closest(p, x, y)) for x, y in ((a, b), (b, c), (c, a)))


@pytest.fixture(scope="module")
def sphere_mesh():
    grid = sphere_grid(64)
    return marching_cubes(grid), grid


def test_sphere_mesh_topology(sphere_mesh):
    mesh, grid = sphere_mesh
    assert mesh.is_watertight()
    assert mesh.euler_characteristic() == 2
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(np.abs(r - 1) <= 1.5 * grid.spacing.max())
    assert mesh.signed_volume() > 0
    assert np.all(mesh.areas() > 0)
    np.testing.assert_allclose(np.linalg.norm(mesh.vertex_normals, axis=1), 1.0, atol=1e-6)
    radial = mesh.vertices / r[:, None]
    assert np.min(np.einsum("ij,ij->i", radial, mesh.vertex_normals)) > 0.99
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", mesh.face_normals(), centroids) > 0)


def test_sign_flip_reverses_winding(sphere_mesh):
    mesh, grid = sphere_mesh
    flipped = marching_cubes(ScalarGrid(-grid.values, grid.lo, grid.hi))
    np.testing.assert_array_equal(flipped.vertices, mesh.vertices)
    canon = lambda t: {tuple(np.roll(x, -int(np.argmin(x)))) for x in t}  # noqa: E731
    assert canon(flipped.triangles[:, ::-1]) == canon(mesh.triangles)


def test_translation_invariance(sphere_mesh):
    mesh, grid = sphere_mesh
    shift = np.array([0.3, -1.7, 2.25])
    moved = marching_cubes(ScalarGrid(grid.values, grid.lo + shift, grid.hi + shift))
    np.testing.assert_array_equal(moved.triangles, mesh.triangles)
    np.testing.assert_allclose(moved.vertices, mesh.vertices + shift, atol=1e-9)


def test_no_crossing_warns_empty():
    grid = ScalarGrid(np.ones((4, 4, 4)), [0, 0, 0], [1, 1, 1])
    with pytest.warns(EmptyMesh):
        mesh = marching_cubes(grid)
    assert mesh.is_empty and not mesh.is_watertight()


def test_level_offsets_surface():
    grid = sphere_grid(48, bound=1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mesh = marching_cubes(grid, 0.2)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert abs(r.mean() - 1.2) < 0.01


def test_exact_zero_corners_do_not_degenerate():
    x = np.linspace(-1, 1, 5)
    gx, gy, gz = np.meshgrid(x, x, x, indexing="ij")
    grid = ScalarGrid(gz.copy(), [-1, -1, -1], [1, 1, 1])  # plane through lattice nodes
    mesh = marching_cubes(grid)
    assert np.all(mesh.areas() > 0)
    assert np.allclose(mesh.vertices[:, 2], 0.0, atol=1e-9)


def test_all_256_cases_are_closed_in_a_box():
    """Every single-cell configuration, padded by positive values, gives a closed surface."""
    for case in range(1, 255):
        vals = np.ones((4, 4, 4))
        corners = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
        for c, (dx, dy, dz) in enumerate(corners):
            if case >> c & 1:
                vals[1 + dx, 1 + dy, 1 + dz] = -1.0
        mesh = marching_cubes(ScalarGrid(vals, [0, 0, 0], [3, 3, 3]))
        assert mesh.is_watertight(), case
        # normals point away from the negative region, so the enclosed volume is positive
        assert mesh.signed_volume() > 0, case


def test_mesh_validation():
    with pytest.raises(InvalidInput):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(InvalidInput):
        MeshDistance(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))))


def test_point_to_mesh_simple_cases():
    tri = TriangleMesh(np.array([[-1.0, -1, 0], [2, -1, 0], [-1, 2, 0]]), [[0, 1, 2]])
    assert point_to_mesh_distance(np.array([0.0, 0, 1]), tri) == 1.0
    for v in tri.vertices:
        assert point_to_mesh_distance(v, tri) == 0.0


def test_vertices_have_zero_distance(sphere_mesh):
    mesh, _ = sphere_mesh
    d = MeshDistance(mesh)(mesh.vertices[::17])
    assert np.all(d == 0.0)


def test_closest_point_regions_against_reference():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a, b, c = rng.normal(size=(3, 3))
        p = rng.normal(scale=2.0, size=3)
        q = closest_points_on_triangles(p[None], a[None], b[None], c[None])[0]
        assert abs(np.linalg.norm(p - q) - triangle_distance_reference(p, a, b, c)) < 1e-9


def test_mesh_distance_against_brute_force(sphere_mesh):
    mesh, _ = sphere_mesh
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(60, 3)) * rng.uniform(0.2, 2.0, size=(60, 1))
    got = MeshDistance(mesh)(pts)
    a, b, c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
    for p, g in zip(pts, got):
        q = closest_points_on_triangles(np.repeat(p[None], len(a), 0), a, b, c)
        assert abs(g - np.linalg.norm(p - q, axis=1).min()) < 1e-12


def test_mesh_distance_dense_sampling():
    tri = TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), [[0, 1, 2]])
    u, v = np.meshgrid(np.linspace(0, 1, 1001), np.linspace(0, 1, 1001))
    keep = u + v <= 1
    samples = np.stack([u[keep], v[keep], np.zeros(keep.sum())], axis=1)
    rng = np.random.default_rng(2)
    for p in rng.uniform(-0.5, 1.5, size=(10, 3)):
        dense = np.linalg.norm(samples - p, axis=1).min()
        # the 1e-3 sampling step bounds how close the dense reference can get
        assert 0.0 <= dense - point_to_mesh_distance(p, tri) < 1e-3


def test_sample_surface(sphere_mesh):
    mesh, _ = sphere_mesh
    s = mesh.sample_surface(5000, 0)
    assert len(s) == 5000
    assert np.all(np.abs(np.linalg.norm(s.points, axis=1) - 1) < 0.01)
    np.testing.assert_array_equal(s.points, mesh.sample_surface(5000, 0).points)


def test_random_fields_close_up():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.normal(size=(6, 6, 6))
        v[[0, -1]] = 1.0
        v[:, [0, -1]] = 1.0
        v[:, :, [0, -1]] = 1.0
        mesh = marching_cubes(ScalarGrid(v, [0, 0, 0], [1, 1, 1]))
        if not mesh.is_empty:
            assert mesh.is_watertight()
