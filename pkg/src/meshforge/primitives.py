"""Procedural fixture meshes: boxes, icospheres, tori.

Used by the demos and the test suite; none of these depend on file I/O.
"""
from __future__ import annotations

import numpy as np

from .mesh import Mesh

# Box faces as corner-index quads (corner i at bit-decoded (x, y, z) offsets),
# wound counterclockwise seen from outside.
_BOX_QUADS = (
    (0, 4, 6, 2),  # -x
    (1, 3, 7, 5),  # +x
    (0, 1, 5, 4),  # -y
    (2, 6, 7, 3),  # +y
    (0, 2, 3, 1),  # -z
    (4, 5, 7, 6),  # +z
)


def box(min_corner=(-0.5, -0.5, -0.5), max_corner=(0.5, 0.5, 0.5)) -> Mesh:
    """Axis-aligned box as 12 outward-oriented triangles."""
    lo = np.asarray(min_corner, dtype=np.float64)
    hi = np.asarray(max_corner, dtype=np.float64)
    corners = np.array(
        [[hi[0] if c & 1 else lo[0], hi[1] if c & 2 else lo[1], hi[2] if c & 4 else lo[2]]
         for c in range(8)]
    )
    faces = []
    for a, b, c, d in _BOX_QUADS:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return Mesh(corners, np.asarray(faces, dtype=np.int64))


def open_box(min_corner=(-0.5, -0.5, -0.5), max_corner=(0.5, 0.5, 0.5),
             remove: int = 1) -> Mesh:
    """Box with `remove` triangles deleted from the +z face (1 or 2)."""
    closed = box(min_corner, max_corner)
    keep = closed.faces[: 12 - int(remove)]
    return Mesh(closed.vertices, keep)


def icosphere(radius: float = 0.5, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Subdivided icosahedron projected onto a sphere; 20 * 4^s faces."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict = {}
        new_faces = []

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = np.asarray(verts[i]) + np.asarray(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    positions = np.asarray(verts, dtype=np.float64) * float(radius) + np.asarray(center)
    return Mesh(positions, np.asarray(faces, dtype=np.int64))


def torus(major_radius: float = 0.3, minor_radius: float = 0.12,
          major_segments: int = 32, minor_segments: int = 16) -> Mesh:
    """Triangulated torus around the z axis; Euler characteristic 0."""
    nu, nv = int(major_segments), int(minor_segments)
    u = 2.0 * np.pi * np.arange(nu) / nu
    v = 2.0 * np.pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major_radius + minor_radius * np.cos(vv)
    verts = np.stack(
        [ring * np.cos(uu), ring * np.sin(uu), minor_radius * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces.append((a, b, c))
            faces.append((a, c, d))
    return Mesh(verts, np.asarray(faces, dtype=np.int64))


def merged(*meshes: Mesh) -> Mesh:
    """Concatenate meshes into one (indices shifted, no welding)."""
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.num_vertices
    return Mesh(np.concatenate(verts, axis=0), np.concatenate(faces, axis=0))
