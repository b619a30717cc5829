"""Mesh file I/O: ASCII OBJ, binary/ASCII STL, binary/ASCII PLY.

Loaders triangulate polygon faces by fan, drop degenerate faces (repeated
index or exactly zero area) with a count, and reject files whose face
indices fall outside the vertex table. STL is a triangle soup, so its
loader welds exactly-coincident vertices to recover shared topology.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .mesh import Mesh, MeshError

SUPPORTED_EXTENSIONS = (".obj", ".stl", ".ply")


class MeshFormatError(MeshError):
    """File cannot be parsed as a supported mesh format."""


@dataclass(frozen=True)
class LoadReport:
    """What the loader did: source format plus dropped-face bookkeeping."""

    path: str
    format: str
    dropped_degenerate_faces: int
    vertex_count: int
    face_count: int

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "format": self.format,
            "dropped_degenerate_faces": self.dropped_degenerate_faces,
            "vertex_count": self.vertex_count,
            "face_count": self.face_count,
        }


def _finalize(
    path: Path,
    fmt: str,
    vertices: np.ndarray,
    faces: np.ndarray,
    normals: Optional[np.ndarray],
    degenerate: str,
) -> Tuple[Mesh, LoadReport]:
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if vertices.shape[0] == 0:
        raise MeshFormatError(f"{path}: no vertices")
    if faces.size and (faces.min() < 0 or faces.max() >= vertices.shape[0]):
        bad = int(faces.max() if faces.max() >= vertices.shape[0] else faces.min())
        raise MeshError(f"{path}: face index out of range ({bad} of {vertices.shape[0]} vertices)")

    repeated = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 2] == faces[:, 0])
    )
    tri = vertices[faces]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    bad = repeated | (areas == 0.0)
    dropped = int(bad.sum())
    if dropped and degenerate == "error":
        raise MeshError(f"{path}: {dropped} degenerate faces (policy=error)")
    faces = faces[~bad]
    if faces.shape[0] == 0:
        raise MeshError(f"{path}: mesh has zero valid faces")

    if normals is not None:
        lengths = np.linalg.norm(normals, axis=1)
        if np.all(lengths > 0.0):
            normals = normals / lengths[:, None]
        else:
            normals = None
    mesh = Mesh(vertices, faces, normals)
    report = LoadReport(str(path), fmt, dropped, mesh.num_vertices, mesh.num_faces)
    return mesh, report


def _fan_triangulate(polygon: List[int]) -> List[Tuple[int, int, int]]:
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


# ---------------------------------------------------------------------------
# OBJ


def _read_obj(path: Path) -> Tuple[np.ndarray, np.ndarray, None]:
    verts: List[Tuple[float, float, float]] = []
    tris: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: malformed vertex record")
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    raw_index = token.split("/")[0]
                    value = int(raw_index)
                    # OBJ indices are 1-based; negatives are relative to the end.
                    idx.append(value - 1 if value > 0 else len(verts) + value)
                if len(idx) < 3:
                    raise MeshFormatError(f"{path}:{lineno}: face with fewer than 3 vertices")
                tris.extend(_fan_triangulate(idx))
    return (
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(tris, dtype=np.int64).reshape(-1, 3),
        None,
    )


def write_obj(path, mesh: Mesh) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# meshforge: {mesh.num_vertices} vertices, {mesh.num_faces} faces\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# STL


def _weld_exact(soup: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Merge byte-identical vertex rows in a (T, 3, 3) triangle soup."""
    flat = soup.reshape(-1, 3)
    view = np.ascontiguousarray(flat).view([("x", "f8"), ("y", "f8"), ("z", "f8")]).ravel()
    _, first, inverse = np.unique(view, return_index=True, return_inverse=True)
    return flat[first], inverse.reshape(-1, 3)


def _read_stl(path: Path) -> Tuple[np.ndarray, np.ndarray, None]:
    data = path.read_bytes()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            records = np.frombuffer(data, dtype=np.uint8, offset=84).reshape(count, 50)
            floats = records[:, :48].copy().view("<f4").reshape(count, 12)
            soup = floats[:, 3:12].astype(np.float64).reshape(count, 3, 3)
            verts, faces = _weld_exact(soup)
            return verts, faces.astype(np.int64), None
    text = data.decode("utf-8", errors="replace")
    if not text.lstrip().lower().startswith("solid"):
        raise MeshFormatError(f"{path}: not a valid STL file")
    coords: List[float] = []
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0].lower() == "vertex":
            coords.extend(float(p) for p in parts[1:4])
    if not coords or len(coords) % 9 != 0:
        raise MeshFormatError(f"{path}: malformed ASCII STL")
    soup = np.asarray(coords, dtype=np.float64).reshape(-1, 3, 3)
    verts, faces = _weld_exact(soup)
    return verts, faces.astype(np.int64), None


def write_stl(path, mesh: Mesh, binary: bool = True) -> None:
    path = Path(path)
    tri = mesh.face_corners()
    normals = mesh.face_normals()
    if binary:
        with open(path, "wb") as fh:
            fh.write(b"\x00" * 80)
            fh.write(struct.pack("<I", mesh.num_faces))
            rec = np.zeros((mesh.num_faces, 50), dtype=np.uint8)
            floats = np.concatenate([normals, tri.reshape(-1, 9)], axis=1).astype("<f4")
            rec[:, :48] = floats.view(np.uint8).reshape(mesh.num_faces, 48)
            fh.write(rec.tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("solid meshforge\n")
            for n, t in zip(normals, tri):
                fh.write(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
                fh.write("    outer loop\n")
                for v in t:
                    fh.write(f"      vertex {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
                fh.write("    endloop\n")
                fh.write("  endfacet\n")
            fh.write("endsolid meshforge\n")


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _read_ply(path: Path) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    data = path.read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshFormatError(f"{path}: not a valid PLY file")
    end = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace")
    body = data[end:]

    fmt = None
    elements: List[dict] = []
    for line in header.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif parts[0] == "property" and elements:
            if parts[1] == "list":
                elements[-1]["props"].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1]["props"].append(("scalar", parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MeshFormatError(f"{path}: unsupported PLY format {fmt!r}")
    endian = "<" if fmt != "binary_big_endian" else ">"

    verts = normals = None
    faces: List[Tuple[int, int, int]] = []
    if fmt == "ascii":
        tokens = body.decode("ascii", errors="replace").split()
        pos = 0
        for elem in elements:
            if elem["name"] == "vertex":
                names = [p[2] for p in elem["props"] if p[0] == "scalar"]
                width = len(names)
                table = np.asarray(
                    tokens[pos : pos + elem["count"] * width], dtype=np.float64
                ).reshape(elem["count"], width)
                pos += elem["count"] * width
                verts, normals = _vertex_columns(path, table, names)
            elif elem["name"] == "face":
                for _ in range(elem["count"]):
                    n = int(tokens[pos]); pos += 1
                    poly = [int(t) for t in tokens[pos : pos + n]]; pos += n
                    faces.extend(_fan_triangulate(poly))
            else:
                width = len(elem["props"])
                pos += elem["count"] * width
    else:
        offset = 0
        for elem in elements:
            if elem["name"] == "vertex":
                if any(p[0] == "list" for p in elem["props"]):
                    raise MeshFormatError(f"{path}: list properties on vertices unsupported")
                names = [p[2] for p in elem["props"]]
                dtype = np.dtype([(p[2], endian + _PLY_TYPES[p[1]]) for p in elem["props"]])
                table = np.frombuffer(body, dtype=dtype, count=elem["count"], offset=offset)
                offset += dtype.itemsize * elem["count"]
                cols = np.stack([table[n].astype(np.float64) for n in names], axis=1)
                verts, normals = _vertex_columns(path, cols, names)
            elif elem["name"] == "face":
                count_t = np.dtype(endian + _PLY_TYPES[elem["props"][0][1]])
                index_t = np.dtype(endian + _PLY_TYPES[elem["props"][0][2]])
                for _ in range(elem["count"]):
                    n = int(np.frombuffer(body, dtype=count_t, count=1, offset=offset)[0])
                    offset += count_t.itemsize
                    poly = np.frombuffer(body, dtype=index_t, count=n, offset=offset)
                    offset += index_t.itemsize * n
                    faces.extend(_fan_triangulate([int(i) for i in poly]))
            else:
                row = sum(np.dtype(endian + _PLY_TYPES[p[1]]).itemsize
                          for p in elem["props"] if p[0] == "scalar")
                offset += row * elem["count"]
    if verts is None:
        raise MeshFormatError(f"{path}: PLY file has no vertex element")
    return verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3), normals


def _vertex_columns(path: Path, table: np.ndarray, names: List[str]):
    try:
        xyz = [names.index(n) for n in ("x", "y", "z")]
    except ValueError:
        raise MeshFormatError(f"{path}: PLY vertex element lacks x/y/z") from None
    verts = table[:, xyz]
    normals = None
    if all(n in names for n in ("nx", "ny", "nz")):
        normals = table[:, [names.index(n) for n in ("nx", "ny", "nz")]]
    return verts, normals


def write_ply(path, mesh: Mesh, binary: bool = True) -> None:
    path = Path(path)
    has_normals = mesh.normals is not None
    props = ["property double x", "property double y", "property double z"]
    if has_normals:
        props += ["property double nx", "property double ny", "property double nz"]
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"element vertex {mesh.num_vertices}\n" + "\n".join(props) + "\n"
        f"element face {mesh.num_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    cols = [mesh.vertices]
    if has_normals:
        cols.append(mesh.normals)
    table = np.concatenate(cols, axis=1)
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(table.astype("<f8").tobytes())
            face_t = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
            rec = np.empty(mesh.num_faces, dtype=face_t)
            rec["n"] = 3
            rec["idx"] = mesh.faces.astype("<i4")
            fh.write(rec.tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            for row in table:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


# ---------------------------------------------------------------------------
# dispatch

_READERS = {".obj": _read_obj, ".stl": _read_stl, ".ply": _read_ply}


def read_mesh(path, degenerate: str = "drop") -> Tuple[Mesh, LoadReport]:
    """Load a mesh and report dropped degenerate faces.

    degenerate: "drop" removes zero-area / repeated-index faces,
    "error" raises when any are present.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")
    ext = path.suffix.lower()
    reader = _READERS.get(ext)
    if reader is None:
        raise MeshFormatError(
            f"unsupported mesh format {ext!r}; expected one of {SUPPORTED_EXTENSIONS}"
        )
    if degenerate not in ("drop", "error"):
        raise ValueError(f"unknown degenerate-face policy {degenerate!r}")
    verts, faces, normals = reader(path)
    return _finalize(path, ext.lstrip("."), verts, faces, normals, degenerate)


def load_mesh(path, degenerate: str = "drop") -> Mesh:
    """Load a mesh, dropping degenerate faces silently (count via read_mesh)."""
    mesh, _ = read_mesh(path, degenerate=degenerate)
    return mesh


def save_mesh(path, mesh: Mesh, binary: bool = True) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        write_obj(path, mesh)
    elif ext == ".stl":
        write_stl(path, mesh, binary=binary)
    elif ext == ".ply":
        write_ply(path, mesh, binary=binary)
    else:
        raise MeshFormatError(
            f"unsupported mesh format {ext!r}; expected one of {SUPPORTED_EXTENSIONS}"
        )
