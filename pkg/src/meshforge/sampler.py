"""Point-set generation: surface sampling, SDF query sets, FPS selection.

Surface points are drawn area-uniformly or importance-weighted toward
sharp dihedral edges. SDF query points mix a near-surface band (Gaussian
offsets from surface samples at two noise scales) with points uniform over
the [-1, 1]^3 query box. Every sampler is deterministic given its stream.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from . import arrayio
from ._kernels import farthest_point_indices
from .bvh import Bvh
from .field import signed_distance_many
from .mesh import Mesh, MeshError
from .rng import (
    RngStream,
    STREAM_NEAR,
    STREAM_QUERY_SURFACE,
    STREAM_VOLUME,
)

PROVENANCE_NEAR = 0
PROVENANCE_UNIFORM = 1
PROVENANCE_SURFACE = 2
PROVENANCE_NAMES = {
    PROVENANCE_NEAR: "near-surface",
    PROVENANCE_UNIFORM: "uniform-volume",
    PROVENANCE_SURFACE: "surface",
}

DEFAULT_SHARP_ANGLE_DEG = 30.0
DEFAULT_SHARP_OFFSET = 0.01
DEFAULT_NEAR_SIGMAS = (0.01, 0.05)
QUERY_BOUND = 1.0


@dataclass(frozen=True)
class SurfaceSamples:
    """Points on a mesh surface with the face normal at each sample."""

    positions: np.ndarray   # (N, 3)
    normals: np.ndarray     # (N, 3) unit
    source_face: np.ndarray  # (N,) face indices
    uniform_fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "normals",
                           np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "source_face",
                           np.asarray(self.source_face, dtype=np.int64).reshape(-1))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def packed(self) -> np.ndarray:
        """(N, 6) position + normal layout used on disk."""
        return np.concatenate([self.positions, self.normals], axis=1)


@dataclass(frozen=True)
class QuerySet:
    """SDF query points with per-point provenance tags."""

    points: np.ndarray       # (M, 3)
    sdf: np.ndarray          # (M,)
    provenance: np.ndarray   # (M,) uint8, see PROVENANCE_NAMES
    noise_sigma: Optional[np.ndarray] = None   # (M,) 0 where not applicable
    base_points: Optional[np.ndarray] = None   # (M, 3) pre-noise positions

    def __post_init__(self):
        object.__setattr__(self, "points",
                           np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "sdf", np.asarray(self.sdf, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "provenance",
                           np.asarray(self.provenance, dtype=np.uint8).reshape(-1))
        if not np.all(np.isfinite(self.sdf)):
            raise ValueError("query set contains non-finite sdf values")

    def __len__(self) -> int:
        return self.points.shape[0]

    def counts(self) -> dict:
        return {
            name: int((self.provenance == code).sum())
            for code, name in PROVENANCE_NAMES.items()
            if np.any(self.provenance == code)
        }


def _face_distribution(mesh: Mesh) -> np.ndarray:
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise MeshError("mesh has zero surface area; cannot sample")
    return areas / total


def _barycentric_uniform(gen: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
    u = gen.random(n)
    v = gen.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    return u, v


def _surface_uniform(mesh: Mesh, n: int, gen: np.random.Generator) -> SurfaceSamples:
    probs = _face_distribution(mesh)
    faces = gen.choice(mesh.num_faces, size=n, p=probs)
    tri = mesh.face_corners()[faces]
    u, v = _barycentric_uniform(gen, n)
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    normals = mesh.face_normals()[faces]
    return SurfaceSamples(pts, normals, faces)


def sample_surface_uniform(mesh: Mesh, n: int, rng: RngStream) -> SurfaceSamples:
    """Area-uniform surface samples: face by area weight, point by uniform
    barycentric draw, normal from the face."""
    if n < 1:
        raise ValueError("need at least one sample")
    return _surface_uniform(mesh, n, rng.generator())


def sharp_edges(mesh: Mesh, angle_threshold_deg: float = DEFAULT_SHARP_ANGLE_DEG):
    """Interior edges whose face-normal angle exceeds the threshold.

    Returns (edge vertex pairs (E, 2), incident faces (E, 2), angles (E,)
    in radians) for the edges above the threshold.
    """
    faces = np.asarray(mesh.faces)
    directed = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    undirected = np.sort(directed, axis=1)
    keys = undirected[:, 0] * mesh.num_vertices + undirected[:, 1]
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    face_of = (order // 3).astype(np.int64)
    # Pairs of consecutive equal keys are interior edges with two faces.
    is_pair = sorted_keys[:-1] == sorted_keys[1:]
    first = np.flatnonzero(is_pair)
    f1 = face_of[first]
    f2 = face_of[first + 1]
    normals = mesh.face_normals()
    cosang = np.clip(np.einsum("ij,ij->i", normals[f1], normals[f2]), -1.0, 1.0)
    angles = np.arccos(cosang)
    tau = np.deg2rad(angle_threshold_deg)
    sharp = angles > tau
    ev = undirected[order][first][sharp]
    return ev, np.stack([f1[sharp], f2[sharp]], axis=1), angles[sharp]


def sample_surface_sharp(
    mesh: Mesh,
    n: int,
    rng: RngStream,
    angle_threshold_deg: float = DEFAULT_SHARP_ANGLE_DEG,
    offset: float = DEFAULT_SHARP_OFFSET,
) -> SurfaceSamples:
    """Importance samples concentrated along sharp dihedral edges.

    Edges are weighted by length * (angle - threshold); each sample picks a
    weighted edge, a uniform point on it, one of the two incident faces,
    and slides into that face by U(0, offset) along the in-face
    perpendicular (clamped at the far triangle boundary). Falls back to
    area-uniform sampling when the mesh has no sharp edge.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    ev, ef, angles = sharp_edges(mesh, angle_threshold_deg)
    if ev.shape[0] == 0:
        base = sample_surface_uniform(mesh, n, rng)
        return SurfaceSamples(base.positions, base.normals, base.source_face,
                              uniform_fallback=True)

    gen = rng.generator()
    verts = mesh.vertices
    lengths = np.linalg.norm(verts[ev[:, 1]] - verts[ev[:, 0]], axis=1)
    weights = lengths * (angles - np.deg2rad(angle_threshold_deg))
    weights /= weights.sum()

    pick = gen.choice(ev.shape[0], size=n, p=weights)
    t = gen.random(n)
    side = gen.integers(0, 2, size=n)
    dist = gen.uniform(0.0, offset, size=n)

    a = verts[ev[pick, 0]]
    b = verts[ev[pick, 1]]
    on_edge = a + t[:, None] * (b - a)
    faces = ef[pick, side]
    tri = mesh.face_corners()[faces]
    fn = mesh.face_normals()[faces]

    edge_dir = b - a
    edge_dir /= np.linalg.norm(edge_dir, axis=1)[:, None]
    perp = np.cross(fn, edge_dir)
    # Point the perpendicular at the face interior.
    centroid = tri.mean(axis=1)
    sign = np.sign(np.einsum("ij,ij->i", perp, centroid - on_edge))
    sign[sign == 0.0] = 1.0
    perp *= sign[:, None]

    step = np.minimum(dist, _max_in_face_step(tri, on_edge, perp))
    pts = on_edge + step[:, None] * perp
    return SurfaceSamples(pts, fn, faces)


def _max_in_face_step(tri: np.ndarray, p: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Largest step along in-plane direction d keeping p + s*d in each triangle."""
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    g11 = np.einsum("ij,ij->i", e1, e1)
    g12 = np.einsum("ij,ij->i", e1, e2)
    g22 = np.einsum("ij,ij->i", e2, e2)
    det = g11 * g22 - g12 * g12
    det = np.where(det == 0.0, 1.0, det)

    def plane_coords(vec):
        r1 = np.einsum("ij,ij->i", vec, e1)
        r2 = np.einsum("ij,ij->i", vec, e2)
        u = (g22 * r1 - g12 * r2) / det
        v = (g11 * r2 - g12 * r1) / det
        return u, v

    pu, pv = plane_coords(p - tri[:, 0])
    du, dv = plane_coords(d)
    # Barycentric values and rates along s: w = (1-u-v, u, v).
    values = np.stack([1.0 - pu - pv, pu, pv], axis=1)
    rates = np.stack([-du - dv, du, dv], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        limits = np.where(rates < 0.0, -values / rates, np.inf)
    s_max = np.minimum(limits.min(axis=1), np.inf)
    return np.maximum(s_max * (1.0 - 1e-9), 0.0)


def sample_near_surface(
    mesh: Mesh,
    bvh: Bvh,
    n: int,
    rng: RngStream,
    sigmas: Sequence[float] = DEFAULT_NEAR_SIGMAS,
    bound: float = QUERY_BOUND,
    keep_base: bool = False,
) -> QuerySet:
    """Query points in a band around the surface.

    Surface samples get isotropic Gaussian offsets, split evenly across the
    noise scales (fine band first), then clamped to the query box. SDF
    values come from the winding-number signed distance.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    gen = rng.generator()
    base = _surface_uniform(mesh, n, gen)
    sigma = np.empty(n)
    split = (n + 1) // 2
    sigmas = tuple(float(s) for s in sigmas)
    sigma[:split] = sigmas[0]
    sigma[split:] = sigmas[1] if len(sigmas) > 1 else sigmas[0]
    noise = gen.standard_normal((n, 3)) * sigma[:, None]
    pts = np.clip(base.positions + noise, -bound, bound)
    sdf = signed_distance_many(bvh, pts)
    return QuerySet(
        pts, sdf, np.full(n, PROVENANCE_NEAR, dtype=np.uint8),
        noise_sigma=sigma,
        base_points=base.positions if keep_base else None,
    )


def sample_volume_uniform(bvh: Bvh, n: int, rng: RngStream,
                          bound: float = QUERY_BOUND) -> QuerySet:
    """Query points i.i.d. uniform over the query box with SDF values."""
    if n < 1:
        raise ValueError("need at least one sample")
    gen = rng.generator()
    pts = gen.uniform(-bound, bound, size=(n, 3))
    sdf = signed_distance_many(bvh, pts)
    return QuerySet(pts, sdf, np.full(n, PROVENANCE_UNIFORM, dtype=np.uint8))


def farthest_point_sampling(points: np.ndarray, k: int, start=0) -> np.ndarray:
    """Greedy max-min subset selection; ties go to the lowest index.

    start may be an index or "deterministic-first" (index 0).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    n = pts.shape[0]
    if n < 1:
        raise ValueError("empty point set")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if isinstance(start, str):
        if start != "deterministic-first":
            raise ValueError(f"unknown start mode {start!r}")
        start = 0
    start = int(start)
    if not 0 <= start < n:
        raise ValueError("start index out of range")
    return farthest_point_indices(pts, k, start)


@dataclass(frozen=True)
class QuerySetConfig:
    """Composition of the SDF query set."""

    n_near: int = 249_856
    n_uniform: int = 249_856
    sigmas: Tuple[float, float] = DEFAULT_NEAR_SIGMAS
    # "near+uniform" joins the near band with uniform-volume points;
    # "near+surface" swaps the second block for on-surface samples.
    composition: str = "near+uniform"

    def __post_init__(self):
        if self.n_near < 1 or self.n_uniform < 1:
            raise ValueError("query counts must be >= 1")
        if self.composition not in ("near+uniform", "near+surface"):
            raise ValueError(f"unknown query composition {self.composition!r}")


def build_query_set(mesh: Mesh, bvh: Bvh, config: QuerySetConfig, seed: int) -> QuerySet:
    """Concatenate the near-surface band with the configured second block."""
    near = sample_near_surface(
        mesh, bvh, config.n_near, RngStream(seed, STREAM_NEAR), sigmas=config.sigmas
    )
    if config.composition == "near+uniform":
        other = sample_volume_uniform(bvh, config.n_uniform, RngStream(seed, STREAM_VOLUME))
    else:
        surf = sample_surface_uniform(
            mesh, config.n_uniform, RngStream(seed, STREAM_QUERY_SURFACE)
        )
        sdf = signed_distance_many(bvh, surf.positions)
        other = QuerySet(
            surf.positions, sdf,
            np.full(config.n_uniform, PROVENANCE_SURFACE, dtype=np.uint8),
        )
    sigma = np.zeros(len(near) + len(other))
    sigma[: len(near)] = near.noise_sigma
    return QuerySet(
        np.concatenate([near.points, other.points], axis=0),
        np.concatenate([near.sdf, other.sdf]),
        np.concatenate([near.provenance, other.provenance]),
        noise_sigma=sigma,
    )


# ---------------------------------------------------------------------------
# serialization (raw little-endian payloads + JSON sidecar)


def save_surface_samples(samples: SurfaceSamples, directory, name: str,
                         rng: RngStream = None) -> Path:
    directory = Path(directory)
    fields = {
        "points": arrayio.write_array(directory / f"{name}.f32", samples.packed(), "f32"),
        "source_face": arrayio.write_array(
            directory / f"{name}_faces.u32", samples.source_face.astype(np.uint32), "u32"),
    }
    sidecar = {
        "kind": "surface-samples",
        "layout": "position(3) + normal(3)",
        "count": len(samples),
        "uniform_fallback": samples.uniform_fallback,
        "fields": fields,
    }
    if rng is not None:
        sidecar["rng"] = rng.describe()
    path = directory / f"{name}.json"
    arrayio.dump_json(path, sidecar)
    return path


def load_surface_samples(sidecar_path) -> SurfaceSamples:
    sidecar_path = Path(sidecar_path)
    meta = arrayio.load_json(sidecar_path)
    packed = arrayio.read_array(sidecar_path.parent, meta["fields"]["points"])
    faces = arrayio.read_array(sidecar_path.parent, meta["fields"]["source_face"])
    return SurfaceSamples(packed[:, :3], packed[:, 3:], faces.astype(np.int64),
                          uniform_fallback=bool(meta.get("uniform_fallback", False)))


def save_query_set(queries: QuerySet, directory, name: str,
                   rng_streams=None) -> Path:
    directory = Path(directory)
    fields = {
        "points": arrayio.write_array(directory / f"{name}_points.f32", queries.points, "f32"),
        "sdf": arrayio.write_array(directory / f"{name}_sdf.f32", queries.sdf, "f32"),
        "provenance": arrayio.write_array(
            directory / f"{name}_provenance.u8", queries.provenance, "u8"),
    }
    if queries.noise_sigma is not None:
        fields["noise_sigma"] = arrayio.write_array(
            directory / f"{name}_sigma.f32", queries.noise_sigma, "f32")
    sidecar = {
        "kind": "query-set",
        "count": len(queries),
        "provenance_names": {str(k): v for k, v in PROVENANCE_NAMES.items()},
        "counts": queries.counts(),
        "fields": fields,
    }
    if rng_streams:
        sidecar["rng"] = [s.describe() for s in rng_streams]
    path = directory / f"{name}.json"
    arrayio.dump_json(path, sidecar)
    return path


def load_query_set(sidecar_path) -> QuerySet:
    sidecar_path = Path(sidecar_path)
    meta = arrayio.load_json(sidecar_path)
    fields = meta["fields"]
    root = sidecar_path.parent
    sigma = None
    if "noise_sigma" in fields:
        sigma = arrayio.read_array(root, fields["noise_sigma"]).astype(np.float64)
    return QuerySet(
        arrayio.read_array(root, fields["points"]).astype(np.float64),
        arrayio.read_array(root, fields["sdf"]).astype(np.float64),
        arrayio.read_array(root, fields["provenance"]),
        noise_sigma=sigma,
    )
