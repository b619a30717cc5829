"""Triangle-mesh domain types and the two normalization procedures.

A Mesh is an indexed triangle soup: float64 vertex positions plus int64
face index triples, with optional unit per-vertex normals. Arrays are
marked read-only after validation; all operations here are pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate geometry, empty mesh)."""


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box, min <= max componentwise."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", _as_readonly(np.asarray(self.min, dtype=np.float64)))
        object.__setattr__(self, "max", _as_readonly(np.asarray(self.max, dtype=np.float64)))
        if self.min.shape != (3,) or self.max.shape != (3,):
            raise ValueError("Aabb min/max must be 3-vectors")
        if np.any(self.min > self.max):
            raise ValueError("Aabb min must be <= max componentwise")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def contains(self, other: "Aabb", strict: bool = False) -> bool:
        if strict:
            return bool(np.all(self.min < other.min) and np.all(self.max > other.max))
        return bool(np.all(self.min <= other.min) and np.all(self.max >= other.max))

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh.

    vertices: (V, 3) float64 positions in model space.
    faces: (F, 3) int64 vertex indices; no face repeats an index.
    normals: optional (V, 3) unit vectors.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if verts.shape[0] == 0:
            raise MeshError("mesh has no vertices")
        if faces.size:
            lo, hi = faces.min(), faces.max()
            if lo < 0 or hi >= verts.shape[0]:
                raise MeshError(
                    f"face index out of range: {hi if hi >= verts.shape[0] else lo} "
                    f"for {verts.shape[0]} vertices"
                )
            repeated = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 2] == faces[:, 0])
            )
            if np.any(repeated):
                raise MeshError(f"{int(repeated.sum())} faces repeat a vertex index")
        object.__setattr__(self, "vertices", _as_readonly(verts))
        object.__setattr__(self, "faces", _as_readonly(faces))
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if normals.shape != verts.shape:
                raise MeshError("normals must match vertex count")
            lengths = np.linalg.norm(normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise MeshError("stored normals must be unit length within 1e-6")
            object.__setattr__(self, "normals", _as_readonly(normals))

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def face_corners(self) -> np.ndarray:
        """Per-face corner positions, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        """Geometric face normals; zero for degenerate faces when normalized."""
        tri = self.face_corners()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if normalized:
            lengths = np.linalg.norm(n, axis=1)
            safe = np.where(lengths > 0.0, lengths, 1.0)
            n = n / safe[:, None]
            n[lengths == 0.0] = 0.0
        return n

    def face_areas(self) -> np.ndarray:
        tri = self.face_corners()
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def translated(self, offset) -> "Mesh":
        return Mesh(self.vertices + np.asarray(offset, dtype=np.float64), self.faces)

    def scaled(self, factor: float) -> "Mesh":
        return Mesh(self.vertices * float(factor), self.faces)


@dataclass(frozen=True)
class NormalizationTransform:
    """Normalization map, applied as output = (input + translation) * scale."""

    translation: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(
            self, "translation", _as_readonly(np.asarray(self.translation, dtype=np.float64))
        )
        object.__setattr__(self, "scale", float(self.scale))
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) + self.translation) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale - self.translation

    def to_dict(self) -> dict:
        return {
            "translation": self.translation.tolist(),
            "scale": self.scale,
            "convention": "output = (input + translation) * scale",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationTransform":
        return cls(np.asarray(d["translation"]), float(d["scale"]))


def compute_aabb(mesh: Mesh) -> Aabb:
    """Componentwise extrema over all vertices."""
    if mesh.num_vertices == 0:
        raise MeshError("cannot compute bounds of an empty mesh")
    return Aabb(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))


def normalize_mesh(mesh: Mesh) -> Tuple[Mesh, NormalizationTransform]:
    """Center the mesh at the origin and scale it into a side-1 cube.

    The longest bounding-box edge maps to exactly 1, so the result fits
    [-0.5, 0.5]^3 with aspect ratio preserved.
    """
    box = compute_aabb(mesh)
    max_extent = float(box.extent.max())
    if max_extent <= 0.0:
        raise MeshError("mesh has zero extent; cannot normalize")
    transform = NormalizationTransform(-box.center, 1.0 / max_extent)
    return Mesh(transform.apply(mesh.vertices), mesh.faces), transform


def normalize_point_cloud(points: np.ndarray) -> Tuple[np.ndarray, NormalizationTransform]:
    """Center a point cloud on its centroid and scale max radius to 1."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("point cloud is empty")
    centroid = pts.mean(axis=0)
    radii = np.linalg.norm(pts - centroid, axis=1)
    max_radius = float(radii.max())
    if max_radius <= 0.0:
        raise ValueError("all points identical; cannot normalize")
    transform = NormalizationTransform(-centroid, 1.0 / max_radius)
    return transform.apply(pts), transform


def mesh_volume(mesh: Mesh) -> float:
    """Signed enclosed volume by the divergence theorem.

    Positive for closed meshes with outward-oriented faces.
    """
    tri = mesh.face_corners()
    return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)
