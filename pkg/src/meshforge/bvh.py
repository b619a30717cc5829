"""Bounding volume hierarchy over mesh triangles.

Nodes own contiguous triangle ranges, built with a binned surface-area
heuristic at the top and middle/median splits below (leaf size <= 4; the
split heuristic is free to change, queries are verified against brute
force). Each sufficiently large node also stores the net boundary edges of
its triangle subset, which lets winding-number queries replace far-away
subtrees by an exact boundary fan instead of summing every triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .mesh import Aabb, Mesh, MeshError

_LEAF_SIZE = 4
_SAH_MIN = 512
_SAH_BINS = 16
_FAN_MIN_TRIS = 16


@dataclass
class Bvh:
    """Immutable acceleration structure; safe to share across threads."""

    mesh: Mesh
    # Triangle geometry in BVH order plus the slot -> original face mapping.
    tris: np.ndarray          # (F, 3, 3) float64
    order: np.ndarray         # (F,) int64
    # Node arrays. left < 0 marks a leaf; start/count are valid for all nodes.
    node_min: np.ndarray      # (N, 3)
    node_max: np.ndarray      # (N, 3)
    left: np.ndarray          # (N,)
    right: np.ndarray         # (N,)
    start: np.ndarray         # (N,)
    count: np.ndarray         # (N,)
    # Net boundary edges per node (CSR); edge_count < 0 means not stored.
    edge_a: np.ndarray        # (E, 3)
    edge_b: np.ndarray        # (E, 3)
    edge_w: np.ndarray        # (E,)
    edge_start: np.ndarray    # (N,)
    edge_count: np.ndarray    # (N,)
    apex: np.ndarray          # (N, 3)
    margin2: float

    @property
    def num_nodes(self) -> int:
        return self.node_min.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.tris.shape[0]

    def root_box(self) -> Aabb:
        return Aabb(self.node_min[0], self.node_max[0])

    def leaf_ranges(self) -> List[tuple]:
        leaves = np.flatnonzero(self.left < 0)
        return [(int(self.start[i]), int(self.count[i])) for i in leaves]

    def query_arrays(self) -> tuple:
        """Positional argument pack for the numba kernels."""
        return (self.node_min, self.node_max, self.left, self.right,
                self.start, self.count, self.tris)

    def winding_arrays(self) -> tuple:
        return (self.edge_a, self.edge_b, self.edge_w,
                self.edge_start, self.edge_count, self.apex)


def _partition(ids, mask):
    return np.concatenate([ids[mask], ids[~mask]]), int(mask.sum())


def _choose_split(centroids, fmin, fmax, axis, lo_val, extent):
    """Binned SAH split position along axis; None if no gainful split."""
    m = centroids.shape[0]
    bins = np.minimum(
        (_SAH_BINS * (centroids[:, axis] - lo_val) / extent).astype(np.int64),
        _SAH_BINS - 1,
    )
    counts = np.bincount(bins, minlength=_SAH_BINS)
    bmin = np.full((_SAH_BINS, 3), np.inf)
    bmax = np.full((_SAH_BINS, 3), -np.inf)
    for b in range(_SAH_BINS):
        sel = bins == b
        if counts[b]:
            bmin[b] = fmin[sel].min(axis=0)
            bmax[b] = fmax[sel].max(axis=0)

    def areas(mins, maxs):
        e = np.maximum(maxs - mins, 0.0)
        return e[:, 0] * e[:, 1] + e[:, 1] * e[:, 2] + e[:, 2] * e[:, 0]

    lmin = np.minimum.accumulate(bmin, axis=0)
    lmax = np.maximum.accumulate(bmax, axis=0)
    rmin = np.minimum.accumulate(bmin[::-1], axis=0)[::-1]
    rmax = np.maximum.accumulate(bmax[::-1], axis=0)[::-1]
    nl = np.cumsum(counts)
    cost = np.full(_SAH_BINS - 1, np.inf)
    for b in range(_SAH_BINS - 1):
        if 0 < nl[b] < m:
            cost[b] = (nl[b] * areas(lmin[b:b + 1], lmax[b:b + 1])[0]
                       + (m - nl[b]) * areas(rmin[b + 1:b + 2], rmax[b + 1:b + 2])[0])
    best = int(np.argmin(cost))
    if not np.isfinite(cost[best]):
        return None
    return bins <= best


def build_bvh(mesh: Mesh, leaf_size: int = _LEAF_SIZE) -> Bvh:
    """Build the hierarchy; raises on meshes with no non-degenerate face."""
    if mesh.num_faces == 0:
        raise MeshError("cannot build a BVH over an empty mesh")
    areas = mesh.face_areas()
    if not np.any(areas > 0.0):
        raise MeshError("mesh has no non-degenerate faces")

    tri = mesh.face_corners()
    fmin = tri.min(axis=1)
    fmax = tri.max(axis=1)
    centroids = tri.mean(axis=1)
    nf = mesh.num_faces

    order = np.arange(nf, dtype=np.int64)
    mins: List[np.ndarray] = []
    maxs: List[np.ndarray] = []
    left: List[int] = []
    right: List[int] = []
    start: List[int] = []
    count: List[int] = []

    def alloc() -> int:
        mins.append(np.zeros(3))
        maxs.append(np.zeros(3))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(mins) - 1

    stack = [(alloc(), 0, nf)]
    while stack:
        node, lo, hi = stack.pop()
        ids = order[lo:hi]
        mins[node] = fmin[ids].min(axis=0)
        maxs[node] = fmax[ids].max(axis=0)
        start[node] = lo
        count[node] = hi - lo
        m = hi - lo
        if m <= leaf_size:
            continue
        cen = centroids[ids]
        ext = cen.max(axis=0) - cen.min(axis=0)
        axis = int(np.argmax(ext))
        mask = None
        if ext[axis] > 0.0:
            if m >= _SAH_MIN:
                mask = _choose_split(cen, fmin[ids], fmax[ids], axis,
                                     cen[:, axis].min(), ext[axis])
            if mask is None:
                mid_val = cen[:, axis].min() + 0.5 * ext[axis]
                mask = cen[:, axis] < mid_val
                if not (0 < mask.sum() < m):
                    mask = None
        if mask is None:
            # Degenerate spread: median split in stable centroid order.
            perm = np.argsort(cen[:, axis], kind="stable")
            order[lo:hi] = ids[perm]
            nl = m // 2
        else:
            order[lo:hi], nl = _partition(ids, mask)
        l = alloc()
        r = alloc()
        left[node] = l
        right[node] = r
        stack.append((r, lo + nl, hi))
        stack.append((l, lo, lo + nl))

    node_min = np.asarray(mins)
    node_max = np.asarray(maxs)
    nodes = len(mins)
    bvh = Bvh(
        mesh=mesh,
        tris=np.ascontiguousarray(tri[order]),
        order=order,
        node_min=node_min,
        node_max=node_max,
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        start=np.asarray(start, dtype=np.int64),
        count=np.asarray(count, dtype=np.int64),
        edge_a=np.zeros((0, 3)),
        edge_b=np.zeros((0, 3)),
        edge_w=np.zeros(0),
        edge_start=np.zeros(nodes, dtype=np.int64),
        edge_count=np.full(nodes, -1, dtype=np.int64),
        apex=0.5 * (node_min + node_max),
        margin2=0.0,
    )
    _attach_winding_edges(bvh)
    diag = float(np.linalg.norm(bvh.node_max[0] - bvh.node_min[0]))
    bvh.margin2 = max(diag * 1e-9, 1e-300) ** 2
    return bvh


def _attach_winding_edges(bvh: Bvh) -> None:
    """Store per-node net boundary edges for the exact winding fan."""
    verts = bvh.mesh.vertices
    # Weld exactly coincident vertices so duplicated geometry cancels.
    view = np.ascontiguousarray(verts).view([("x", "f8"), ("y", "f8"), ("z", "f8")]).ravel()
    pos_table, pid = np.unique(view, return_inverse=True)
    pos_table = np.stack([pos_table["x"], pos_table["y"], pos_table["z"]], axis=1)
    np_ids = pos_table.shape[0]

    faces_sorted = np.asarray(bvh.mesh.faces)[bvh.order]
    fa = pid[faces_sorted]
    # Directed edges per triangle slot: (0,1), (1,2), (2,0).
    ea = np.stack([fa[:, 0], fa[:, 1], fa[:, 2]], axis=1)
    eb = np.stack([fa[:, 1], fa[:, 2], fa[:, 0]], axis=1)

    chunks_a: List[np.ndarray] = []
    chunks_b: List[np.ndarray] = []
    chunks_w: List[np.ndarray] = []
    total = 0
    for node in range(bvh.num_nodes):
        m = int(bvh.count[node])
        if m < _FAN_MIN_TRIS:
            continue
        s = int(bvh.start[node])
        a = ea[s:s + m].ravel()
        b = eb[s:s + m].ravel()
        keep = a != b
        a = a[keep]
        b = b[keep]
        sign = np.where(a < b, 1.0, -1.0)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys = lo * np_ids + hi
        uniq, inverse = np.unique(keys, return_inverse=True)
        net = np.bincount(inverse, weights=sign)
        nz = net != 0.0
        uniq = uniq[nz]
        bvh.edge_start[node] = total
        bvh.edge_count[node] = uniq.shape[0]
        total += uniq.shape[0]
        chunks_a.append(pos_table[uniq // np_ids])
        chunks_b.append(pos_table[uniq % np_ids])
        chunks_w.append(net[nz])
    if total:
        bvh.edge_a = np.ascontiguousarray(np.concatenate(chunks_a, axis=0))
        bvh.edge_b = np.ascontiguousarray(np.concatenate(chunks_b, axis=0))
        bvh.edge_w = np.ascontiguousarray(np.concatenate(chunks_w))
