"""Readers and writers for XYZ, PLY (ascii / binary little endian) and OBJ."""

from __future__ import annotations

import os

import numpy as np

from .core import PointCloud
from .errors import CorruptFile, InvalidInput
from .mesher import TriangleMesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_xyz(path) -> PointCloud:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 6):
                raise CorruptFile(f"{path}:{lineno}: expected 3 or 6 values, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise CorruptFile(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise CorruptFile(f"{path}: no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CorruptFile(f"{path}: mixed column counts")
    data = np.asarray(rows)
    normals = _unit_or_none(data[:, 3:6]) if data.shape[1] == 6 else None
    return PointCloud(data[:, :3], normals)


def write_xyz(path, cloud: PointCloud) -> None:
    data = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    np.savetxt(path, data, fmt="%.17g")


def _unit_or_none(normals: np.ndarray):
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(lengths == 0):
        return None
    return normals / lengths


def _parse_ply_header(fh):
    first = fh.readline()
    if first.strip() != b"ply":
        raise CorruptFile("missing 'ply' magic")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise CorruptFile("unterminated PLY header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append({"name": tokens[1], "count": int(tokens[2]), "props": []})
        elif tokens[0] == "property":
            if not elements:
                raise CorruptFile("property before element")
            if tokens[1] == "list":
                elements[-1]["props"].append((tokens[4], "list", tokens[2], tokens[3]))
            else:
                elements[-1]["props"].append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise CorruptFile(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_element_binary(fh, element):
    props = element["props"]
    if all(len(p) == 2 for p in props):
        dtype = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
        raw = fh.read(dtype.itemsize * element["count"])
        if len(raw) != dtype.itemsize * element["count"]:
            raise CorruptFile("truncated PLY body")
        return {"table": np.frombuffer(raw, dtype=dtype)}
    faces = []
    for _ in range(element["count"]):
        record = []
        for p in props:
            if len(p) == 2:
                size = np.dtype(_PLY_TYPES[p[1]]).itemsize
                fh.read(size)
                continue
            ctype = np.dtype("<" + _PLY_TYPES[p[2]])
            itype = np.dtype("<" + _PLY_TYPES[p[3]])
            head = fh.read(ctype.itemsize)
            if len(head) != ctype.itemsize:
                raise CorruptFile("truncated PLY body")
            count = int(np.frombuffer(head, ctype)[0])
            body = fh.read(itype.itemsize * count)
            if len(body) != itype.itemsize * count:
                raise CorruptFile("truncated PLY body")
            record = np.frombuffer(body, itype).astype(np.int64)
        faces.append(record)
    return {"lists": faces}


def _read_element_ascii(fh, element):
    props = element["props"]
    rows = []
    for _ in range(element["count"]):
        line = fh.readline()
        if not line:
            raise CorruptFile("truncated PLY body")
        rows.append(line.split())
    if all(len(p) == 2 for p in props):
        dtype = np.dtype([(p[0], _PLY_TYPES[p[1]]) for p in props])
        table = np.zeros(len(rows), dtype=dtype)
        try:
            for j, p in enumerate(props):
                table[p[0]] = [float(r[j]) for r in rows]
        except (IndexError, ValueError) as exc:
            raise CorruptFile(f"bad PLY row: {exc}") from None
        return {"table": table}
    faces = []
    for r in rows:
        count = int(r[0])
        faces.append(np.asarray([int(v) for v in r[1:1 + count]], dtype=np.int64))
    return {"lists": faces}


def read_ply(path):
    """Return a :class:`PointCloud`, or a :class:`TriangleMesh` when faces are present."""
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        data = {}
        for element in elements:
            reader = _read_element_binary if fmt == "binary_little_endian" else _read_element_ascii
            data[element["name"]] = reader(fh, element)
    if "vertex" not in data or "table" not in data["vertex"]:
        raise CorruptFile(f"{path}: no vertex element")
    table = data["vertex"]["table"]
    names = table.dtype.names
    if not all(c in names for c in "xyz"):
        raise CorruptFile(f"{path}: vertex element lacks x/y/z")
    points = np.stack([table[c].astype(np.float64) for c in "xyz"], axis=1)
    normals = None
    if all(c in names for c in ("nx", "ny", "nz")):
        normals = _unit_or_none(np.stack([table[c].astype(np.float64) for c in ("nx", "ny", "nz")], axis=1))
    faces = data.get("face", {}).get("lists")
    if faces:
        tris = _triangulate(faces)
        return TriangleMesh(points, tris, normals)
    return PointCloud(points, normals)


def _triangulate(faces) -> np.ndarray:
    tris = []
    for f in faces:
        for k in range(1, len(f) - 1):
            tris.append((f[0], f[k], f[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def write_ply(path, obj, binary: bool = True) -> None:
    """Write a point cloud or a triangle mesh; coordinates are stored as float32."""
    if isinstance(obj, TriangleMesh):
        points, normals, faces = obj.vertices, obj.vertex_normals, obj.triangles
    else:
        points, normals, faces = obj.points, obj.normals, None
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if normals is not None and len(normals):
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    table = np.zeros(len(points), dtype=fields)
    for j, c in enumerate("xyz"):
        table[c] = points[:, j]
    if len(fields) == 6:
        for j, c in enumerate(("nx", "ny", "nz")):
            table[c] = normals[:, j]
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(points)}"]
    header += [f"property float {name}" for name, _ in fields]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(table.tobytes())
            if faces is not None:
                ftab = np.zeros(len(faces), dtype=[("n", "u1"), ("i", "<i4", (3,))])
                ftab["n"] = 3
                ftab["i"] = faces
                fh.write(ftab.tobytes())
        else:
            for row in table:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))
            if faces is not None:
                for f in faces:
                    fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for n in mesh.vertex_normals:
            fh.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
        has_normals = len(mesh.vertex_normals) == len(mesh.vertices)
        for t in mesh.triangles + 1:
            if has_normals:
                fh.write(f"f {t[0]}//{t[0]} {t[1]}//{t[1]} {t[2]}//{t[2]}\n")
            else:
                fh.write(f"f {t[0]} {t[1]} {t[2]}\n")


def read_obj(path) -> TriangleMesh:
    verts, normals, faces = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "vn":
                    normals.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    faces.append([int(tok.split("/")[0]) - 1 for tok in parts[1:]])
            except ValueError as exc:
                raise CorruptFile(f"{path}:{lineno}: {exc}") from None
    if not verts:
        raise CorruptFile(f"{path}: no vertices")
    vn = np.asarray(normals, dtype=np.float64) if len(normals) == len(verts) else None
    return TriangleMesh(np.asarray(verts, dtype=np.float64), _triangulate(faces), vn)


def read_cloud(path) -> PointCloud:
    """Load a point cloud from .xyz/.txt/.pts or .ply (a mesh yields its vertices)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".xyz", ".txt", ".pts"):
        return read_xyz(path)
    if ext == ".ply":
        obj = read_ply(path)
        if isinstance(obj, TriangleMesh):
            return PointCloud(obj.vertices, obj.vertex_normals if len(obj.vertex_normals) else None)
        return obj
    raise InvalidInput(f"unsupported point cloud format: {path}")


def write_cloud(path, cloud: PointCloud) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ply":
        write_ply(path, cloud)
    elif ext in (".xyz", ".txt", ".pts"):
        write_xyz(path, cloud)
    else:
        raise InvalidInput(f"unsupported point cloud format: {path}")


def read_mesh(path) -> TriangleMesh:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        return read_obj(path)
    if ext == ".ply":
        obj = read_ply(path)
        if isinstance(obj, TriangleMesh):
            return obj
        raise InvalidInput(f"{path} contains no faces")
    raise InvalidInput(f"unsupported mesh format: {path}")


def write_mesh(path, mesh: TriangleMesh) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        write_obj(path, mesh)
    elif ext == ".ply":
        write_ply(path, mesh)
    else:
        raise InvalidInput(f"unsupported mesh format: {path}")

