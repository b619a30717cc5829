"""Shared fixtures; expensive geometry is session-scoped and reused."""
from __future__ import annotations

import numpy as np
import pytest

from meshforge import build_bvh
from meshforge import primitives


@pytest.fixture(scope="session")
def cube():
    return primitives.box()


@pytest.fixture(scope="session")
def cube_bvh(cube):
    return build_bvh(cube)


@pytest.fixture(scope="session")
def icosphere_small():
    # 320 faces; fast fixture for statistical tests.
    return primitives.icosphere(radius=0.4, subdivisions=2)


@pytest.fixture(scope="session")
def icosphere_mid():
    # 1280 faces.
    return primitives.icosphere(radius=0.4, subdivisions=3)


@pytest.fixture(scope="session")
def icosphere_20k():
    # 20480 faces; tessellation error ~6e-5, well under the SDF tolerances.
    return primitives.icosphere(radius=0.4, subdivisions=5)


@pytest.fixture(scope="session")
def icosphere_20k_bvh(icosphere_20k):
    return build_bvh(icosphere_20k)


def ref_point_triangle_distance(tri, q):
    """Independent closest-distance oracle: project to the plane, fall back
    to the three edge segments when the projection leaves the triangle."""
    a, b, c = tri
    n = np.cross(b - a, c - a)
    nn = n @ n
    candidates = []
    if nn > 0:
        proj = q - n * ((q - a) @ n) / nn
        # Barycentric test via areas.
        w0 = np.cross(b - proj, c - proj) @ n
        w1 = np.cross(c - proj, a - proj) @ n
        w2 = np.cross(a - proj, b - proj) @ n
        if w0 >= 0 and w1 >= 0 and w2 >= 0:
            candidates.append(np.linalg.norm(q - proj))
    for p0, p1 in ((a, b), (b, c), (c, a)):
        d = p1 - p0
        dd = d @ d
        t = 0.0 if dd == 0 else np.clip((q - p0) @ d / dd, 0.0, 1.0)
        candidates.append(np.linalg.norm(q - (p0 + t * d)))
    return min(candidates)


def ref_closest_distance(mesh, q):
    """Brute-force closest distance over every face (vectorized)."""
    tri = mesh.face_corners()
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    safe_nn = np.where(nn > 0, nn, 1.0)
    proj = q - n * (np.einsum("ij,ij->i", q - a, n) / safe_nn)[:, None]
    w0 = np.einsum("ij,ij->i", np.cross(b - proj, c - proj), n)
    w1 = np.einsum("ij,ij->i", np.cross(c - proj, a - proj), n)
    w2 = np.einsum("ij,ij->i", np.cross(a - proj, b - proj), n)
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0) & (nn > 0)
    best = np.where(inside, np.linalg.norm(q - proj, axis=1), np.inf)
    for p0, p1 in ((a, b), (b, c), (c, a)):
        d = p1 - p0
        dd = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", q - p0, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(q - (p0 + t[:, None] * d), axis=1))
    return float(best.min())


def ref_winding_number(mesh, q):
    """Direct solid-angle sum over all triangles (vectorized oracle)."""
    tri = mesh.face_corners() - q
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(c, axis=1)
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (la * lb * lc
           + np.einsum("ij,ij->i", a, b) * lc
           + np.einsum("ij,ij->i", b, c) * la
           + np.einsum("ij,ij->i", c, a) * lb)
    ang = 2.0 * np.arctan2(det, den)
    ang[det == 0.0] = 0.0
    return float(ang.sum() / (4.0 * np.pi))


def ref_ray_parity_inside(mesh, q, direction=(0.577350269, 0.525731112, 0.623489802)):
    """Inside test by counting ray crossings (Moller-Trumbore, vectorized)."""
    d = np.asarray(direction) / np.linalg.norm(direction)
    tri = mesh.face_corners()
    a = tri[:, 0]
    e1 = tri[:, 1] - a
    e2 = tri[:, 2] - a
    p = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = q - a
    u = np.einsum("ij,ij->i", s, p) * inv
    qv = np.cross(s, e1)
    v = (qv @ d) * inv
    t = np.einsum("ij,ij->i", e2, qv) * inv
    hits = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
    return int(hits.sum()) % 2 == 1
