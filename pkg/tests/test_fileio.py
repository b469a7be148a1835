import numpy as np
import pytest

from n2nsdf.core import PointCloud, sphere_points
from n2nsdf.errors import CorruptFile, InvalidInput
from n2nsdf.fileio import read_cloud, read_mesh, read_obj, read_ply, read_xyz, write_cloud, write_mesh, \
    write_obj, write_ply, write_xyz
from n2nsdf.mesher import TriangleMesh

TETRA = TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]),
                     np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]))


def test_xyz_roundtrip_exact(tmp_path):
    c = sphere_points(57)
    write_xyz(tmp_path / "a.xyz", c)
    back = read_xyz(tmp_path / "a.xyz")
    np.testing.assert_array_equal(back.points, c.points)
    np.testing.assert_allclose(back.normals, c.normals, atol=1e-15)


def test_xyz_comments_and_errors(tmp_path):
    p = tmp_path / "b.xyz"
    p.write_text("# header\n1 2 3\n\n4 5 6 # trailing\n")
    np.testing.assert_array_equal(read_xyz(p).points, [[1, 2, 3], [4, 5, 6]])
    p.write_text("1 2\n")
    with pytest.raises(CorruptFile):
        read_xyz(p)
    p.write_text("1 2 x\n")
    with pytest.raises(CorruptFile):
        read_xyz(p)
    p.write_text("# nothing\n")
    with pytest.raises(CorruptFile):
        read_xyz(p)


@pytest.mark.parametrize("binary", [True, False])
def test_ply_cloud_roundtrip(tmp_path, binary):
    c = sphere_points(33)
    write_ply(tmp_path / "c.ply", c, binary=binary)
    back = read_ply(tmp_path / "c.ply")
    assert isinstance(back, PointCloud)
    np.testing.assert_array_equal(back.points, c.points.astype(np.float32).astype(np.float64))
    np.testing.assert_allclose(back.normals, c.normals, atol=1e-6)


@pytest.mark.parametrize("binary", [True, False])
def test_ply_mesh_roundtrip(tmp_path, binary):
    write_ply(tmp_path / "m.ply", TETRA, binary=binary)
    back = read_ply(tmp_path / "m.ply")
    assert isinstance(back, TriangleMesh)
    np.testing.assert_array_equal(back.triangles, TETRA.triangles)
    np.testing.assert_array_equal(back.vertices, TETRA.vertices)


def test_ply_quads_and_extra_properties(tmp_path):
    p = tmp_path / "q.ply"
    p.write_bytes(b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty double x\n"
                  b"property double y\nproperty double z\nproperty uchar red\n"
                  b"element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                  b"0 0 0 1\n1 0 0 2\n1 1 0 3\n0 1 0 4\n4 0 1 2 3\n")
    m = read_ply(p)
    np.testing.assert_array_equal(m.triangles, [[0, 1, 2], [0, 2, 3]])


def test_ply_errors(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_bytes(b"not a ply\n")
    with pytest.raises(CorruptFile):
        read_ply(p)
    p.write_bytes(b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n")
    with pytest.raises(CorruptFile):
        read_ply(p)
    p.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n"
                  b"property float y\nproperty float z\nend_header\n" + b"\0" * 12)
    with pytest.raises(CorruptFile):
        read_ply(p)


def test_obj_roundtrip(tmp_path):
    write_obj(tmp_path / "t.obj", TETRA)
    back = read_obj(tmp_path / "t.obj")
    np.testing.assert_array_equal(back.vertices, TETRA.vertices)
    np.testing.assert_array_equal(back.triangles, TETRA.triangles)
    np.testing.assert_allclose(back.vertex_normals, TETRA.vertex_normals, atol=1e-15)


def test_dispatch(tmp_path):
    c = sphere_points(10)
    write_cloud(tmp_path / "a.xyz", c)
    write_cloud(tmp_path / "a.ply", c)
    assert len(read_cloud(tmp_path / "a.xyz")) == 10
    assert len(read_cloud(tmp_path / "a.ply")) == 10
    write_mesh(tmp_path / "m.obj", TETRA)
    write_mesh(tmp_path / "m.ply", TETRA)
    assert len(read_mesh(tmp_path / "m.obj").triangles) == 4
    assert len(read_mesh(tmp_path / "m.ply").triangles) == 4
    assert len(read_cloud(tmp_path / "m.ply")) == 4
    with pytest.raises(InvalidInput):
        read_mesh(tmp_path / "a.ply")
    with pytest.raises(InvalidInput):
        read_cloud(tmp_path / "a.stl")
    with pytest.raises(InvalidInput):
        write_mesh(tmp_path / "a.stl", TETRA)
