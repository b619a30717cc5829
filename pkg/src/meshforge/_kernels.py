"""Numba kernels behind the BVH: closest point, rays, winding numbers, FPS.

Deterministic by construction: traversal order is fixed, per-query results
go to independent output slots, and per-query accumulation is sequential,
so results do not depend on thread count or schedule.
"""
from __future__ import annotations

import os

# The sandboxed TBB build is too old for numba; the workqueue layer is
# portable and sufficient (parallelism here is per-query, order-free).
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit, prange

_STACK = 128
_FAR = 1.0e300


@njit(cache=True)
def _closest_on_tri(ax, ay, az, bx, by, bz, cx, cy, cz, qx, qy, qz):
    """Squared distance and closest point from q to triangle abc (Ericson)."""
    abx = bx - ax; aby = by - ay; abz = bz - az
    acx = cx - ax; acy = cy - ay; acz = cz - az
    apx = qx - ax; apy = qy - ay; apz = qz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        px, py, pz = ax, ay, az
    else:
        bpx = qx - bx; bpy = qy - by; bpz = qz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            px, py, pz = bx, by, bz
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                px = ax + v * abx; py = ay + v * aby; pz = az + v * abz
            else:
                cpx = qx - cx; cpy = qy - cy; cpz = qz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    px, py, pz = cx, cy, cz
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        px = ax + w * acx; py = ay + w * acy; pz = az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            px = bx + w * (cx - bx)
                            py = by + w * (cy - by)
                            pz = bz + w * (cz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            px = ax + abx * v + acx * w
                            py = ay + aby * v + acy * w
                            pz = az + abz * v + acz * w
    dx = qx - px; dy = qy - py; dz = qz - pz
    return dx * dx + dy * dy + dz * dz, px, py, pz


@njit(cache=True)
def _box_dist2(mnx, mny, mnz, mxx, mxy, mxz, qx, qy, qz):
    d = 0.0
    if qx < mnx:
        d += (mnx - qx) * (mnx - qx)
    elif qx > mxx:
        d += (qx - mxx) * (qx - mxx)
    if qy < mny:
        d += (mny - qy) * (mny - qy)
    elif qy > mxy:
        d += (qy - mxy) * (qy - mxy)
    if qz < mnz:
        d += (mnz - qz) * (mnz - qz)
    elif qz > mxz:
        d += (qz - mxz) * (qz - mxz)
    return d


@njit(cache=True)
def closest_point_query(node_min, node_max, left, right, start, count, tris,
                        qx, qy, qz):
    """Nearest surface point: (dist2, px, py, pz, triangle slot)."""
    stack = np.empty(_STACK, np.int64)
    stack[0] = 0
    top = 1
    best = _FAR
    bpx = bpy = bpz = 0.0
    bslot = -1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_dist2(node_min[node, 0], node_min[node, 1], node_min[node, 2],
                      node_max[node, 0], node_max[node, 1], node_max[node, 2],
                      qx, qy, qz) >= best:
            continue
        if left[node] < 0:
            s = start[node]
            e = s + count[node]
            for t in range(s, e):
                d2, px, py, pz = _closest_on_tri(
                    tris[t, 0, 0], tris[t, 0, 1], tris[t, 0, 2],
                    tris[t, 1, 0], tris[t, 1, 1], tris[t, 1, 2],
                    tris[t, 2, 0], tris[t, 2, 1], tris[t, 2, 2],
                    qx, qy, qz)
                if d2 < best:
                    best = d2
                    bpx = px; bpy = py; bpz = pz
                    bslot = t
        else:
            l = left[node]
            r = right[node]
            dl = _box_dist2(node_min[l, 0], node_min[l, 1], node_min[l, 2],
                            node_max[l, 0], node_max[l, 1], node_max[l, 2],
                            qx, qy, qz)
            dr = _box_dist2(node_min[r, 0], node_min[r, 1], node_min[r, 2],
                            node_max[r, 0], node_max[r, 1], node_max[r, 2],
                            qx, qy, qz)
            # Push the farther child first so the nearer one is visited next.
            if dl <= dr:
                if dr < best:
                    stack[top] = r; top += 1
                if dl < best:
                    stack[top] = l; top += 1
            else:
                if dl < best:
                    stack[top] = l; top += 1
                if dr < best:
                    stack[top] = r; top += 1
    return best, bpx, bpy, bpz, bslot


@njit(cache=True, parallel=True)
def closest_point_many(node_min, node_max, left, right, start, count, tris, queries,
                       out_point, out_dist, out_slot):
    for i in prange(queries.shape[0]):
        d2, px, py, pz, slot = closest_point_query(
            node_min, node_max, left, right, start, count, tris,
            queries[i, 0], queries[i, 1], queries[i, 2])
        out_point[i, 0] = px
        out_point[i, 1] = py
        out_point[i, 2] = pz
        out_dist[i] = np.sqrt(d2)
        out_slot[i] = slot


@njit(cache=True)
def _tri_solid_angle(ax, ay, az, bx, by, bz, cx, cy, cz, qx, qy, qz):
    """Signed solid angle of triangle abc seen from q (van Oosterom-Strackee).

    Exactly coplanar configurations return 0, the principal value, so
    on-surface queries see no contribution from their own supporting plane.
    """
    ax -= qx; ay -= qy; az -= qz
    bx -= qx; by -= qy; bz -= qz
    cx -= qx; cy -= qy; cz -= qz
    det = (ax * (by * cz - bz * cy)
           - ay * (bx * cz - bz * cx)
           + az * (bx * cy - by * cx))
    if det == 0.0:
        return 0.0
    la = np.sqrt(ax * ax + ay * ay + az * az)
    lb = np.sqrt(bx * bx + by * by + bz * bz)
    lc = np.sqrt(cx * cx + cy * cy + cz * cz)
    den = (la * lb * lc
           + (ax * bx + ay * by + az * bz) * lc
           + (bx * cx + by * cy + bz * cz) * la
           + (cx * ax + cy * ay + cz * az) * lb)
    return 2.0 * np.arctan2(det, den)


@njit(cache=True)
def _solid_angle_range(tris, s, e, qx, qy, qz):
    total = 0.0
    for t in range(s, e):
        total += _tri_solid_angle(
            tris[t, 0, 0], tris[t, 0, 1], tris[t, 0, 2],
            tris[t, 1, 0], tris[t, 1, 1], tris[t, 1, 2],
            tris[t, 2, 0], tris[t, 2, 1], tris[t, 2, 2],
            qx, qy, qz)
    return total


@njit(cache=True)
def solid_angle_total(node_min, node_max, left, right, start, count, tris,
                      edge_a, edge_b, edge_w, edge_start, edge_count, apex,
                      margin2, qx, qy, qz):
    """Total signed solid angle of the whole surface seen from q.

    Exact hierarchical evaluation: a subtree strictly outside of which q
    lies contributes the same angle as any surface sharing its net boundary,
    so it is replaced by a fan from the node apex over the node's net
    boundary edges. Subtrees whose fan would not be cheaper fall back to the
    direct per-triangle sum, which is also used near q. Winding number is
    this total divided by 4*pi.
    """
    stack = np.empty(_STACK, np.int64)
    stack[0] = 0
    top = 1
    total = 0.0
    while top > 0:
        top -= 1
        node = stack[top]
        outside = _box_dist2(node_min[node, 0], node_min[node, 1], node_min[node, 2],
                             node_max[node, 0], node_max[node, 1], node_max[node, 2],
                             qx, qy, qz) > margin2
        if outside and edge_count[node] >= 0 and edge_count[node] < 3 * count[node]:
            s = edge_start[node]
            e = s + edge_count[node]
            apx = apex[node, 0]
            apy = apex[node, 1]
            apz = apex[node, 2]
            for k in range(s, e):
                total += edge_w[k] * _tri_solid_angle(
                    edge_a[k, 0], edge_a[k, 1], edge_a[k, 2],
                    edge_b[k, 0], edge_b[k, 1], edge_b[k, 2],
                    apx, apy, apz, qx, qy, qz)
        elif outside or left[node] < 0:
            total += _solid_angle_range(tris, start[node], start[node] + count[node],
                                        qx, qy, qz)
        else:
            stack[top] = left[node]; top += 1
            stack[top] = right[node]; top += 1
    return total


@njit(cache=True, parallel=True)
def winding_many(node_min, node_max, left, right, start, count, tris,
                 edge_a, edge_b, edge_w, edge_start, edge_count, apex,
                 margin2, queries, out):
    for i in prange(queries.shape[0]):
        out[i] = solid_angle_total(
            node_min, node_max, left, right, start, count, tris,
            edge_a, edge_b, edge_w, edge_start, edge_count, apex,
            margin2, queries[i, 0], queries[i, 1], queries[i, 2]) / (4.0 * np.pi)


@njit(cache=True, parallel=True)
def winding_direct_many(tris, queries, out):
    for i in prange(queries.shape[0]):
        out[i] = _solid_angle_range(
            tris, 0, tris.shape[0], queries[i, 0], queries[i, 1], queries[i, 2]
        ) / (4.0 * np.pi)


@njit(cache=True, parallel=True)
def signed_distance_many(node_min, node_max, left, right, start, count, tris,
                         edge_a, edge_b, edge_w, edge_start, edge_count, apex,
                         margin2, queries, out):
    """Unsigned closest distance, negated where winding > 0.5 (interior)."""
    for i in prange(queries.shape[0]):
        qx = queries[i, 0]
        qy = queries[i, 1]
        qz = queries[i, 2]
        d2, _, _, _, _ = closest_point_query(
            node_min, node_max, left, right, start, count, tris, qx, qy, qz)
        omega = solid_angle_total(
            node_min, node_max, left, right, start, count, tris,
            edge_a, edge_b, edge_w, edge_start, edge_count, apex,
            margin2, qx, qy, qz)
        d = np.sqrt(d2)
        out[i] = -d if omega > 2.0 * np.pi else d


@njit(cache=True)
def _ray_box(mnx, mny, mnz, mxx, mxy, mxz, ox, oy, oz, ix, iy, iz, tmax):
    """Slab test; entry parameter along the ray, or _FAR on miss."""
    t0 = 0.0
    t1 = tmax
    ta = (mnx - ox) * ix
    tb = (mxx - ox) * ix
    if ta > tb:
        ta, tb = tb, ta
    if ta > t0:
        t0 = ta
    if tb < t1:
        t1 = tb
    ta = (mny - oy) * iy
    tb = (mxy - oy) * iy
    if ta > tb:
        ta, tb = tb, ta
    if ta > t0:
        t0 = ta
    if tb < t1:
        t1 = tb
    ta = (mnz - oz) * iz
    tb = (mxz - oz) * iz
    if ta > tb:
        ta, tb = tb, ta
    if ta > t0:
        t0 = ta
    if tb < t1:
        t1 = tb
    if t0 <= t1:
        return t0
    return _FAR


@njit(cache=True)
def _ray_tri(ax, ay, az, bx, by, bz, cx, cy, cz, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore, double-sided; returns hit parameter t or _FAR."""
    e1x = bx - ax; e1y = by - ay; e1z = bz - az
    e2x = cx - ax; e2y = cy - ay; e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-14 < det < 1e-14:
        return _FAR
    inv = 1.0 / det
    tx = ox - ax; ty = oy - ay; tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return _FAR
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return _FAR
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= 1e-12:
        return _FAR
    return t


@njit(cache=True)
def ray_query(node_min, node_max, left, right, start, count, tris,
              ox, oy, oz, dx, dy, dz):
    """Nearest hit along a ray: (t, triangle slot); t = _FAR on miss."""
    ix = 1.0 / dx if dx != 0.0 else _FAR
    iy = 1.0 / dy if dy != 0.0 else _FAR
    iz = 1.0 / dz if dz != 0.0 else _FAR
    stack = np.empty(_STACK, np.int64)
    stack[0] = 0
    top = 1
    best = _FAR
    bslot = -1
    while top > 0:
        top -= 1
        node = stack[top]
        if _ray_box(node_min[node, 0], node_min[node, 1], node_min[node, 2],
                    node_max[node, 0], node_max[node, 1], node_max[node, 2],
                    ox, oy, oz, ix, iy, iz, best) >= best:
            continue
        if left[node] < 0:
            s = start[node]
            e = s + count[node]
            for t in range(s, e):
                hit = _ray_tri(
                    tris[t, 0, 0], tris[t, 0, 1], tris[t, 0, 2],
                    tris[t, 1, 0], tris[t, 1, 1], tris[t, 1, 2],
                    tris[t, 2, 0], tris[t, 2, 1], tris[t, 2, 2],
                    ox, oy, oz, dx, dy, dz)
                if hit < best:
                    best = hit
                    bslot = t
        else:
            l = left[node]
            r = right[node]
            tl = _ray_box(node_min[l, 0], node_min[l, 1], node_min[l, 2],
                          node_max[l, 0], node_max[l, 1], node_max[l, 2],
                          ox, oy, oz, ix, iy, iz, best)
            tr = _ray_box(node_min[r, 0], node_min[r, 1], node_min[r, 2],
                          node_max[r, 0], node_max[r, 1], node_max[r, 2],
                          ox, oy, oz, ix, iy, iz, best)
            if tl <= tr:
                if tr < best:
                    stack[top] = r; top += 1
                if tl < best:
                    stack[top] = l; top += 1
            else:
                if tl < best:
                    stack[top] = l; top += 1
                if tr < best:
                    stack[top] = r; top += 1
    return best, bslot


@njit(cache=True, parallel=True)
def raycast_many(node_min, node_max, left, right, start, count, tris,
                 origins, directions, out_t, out_slot):
    for i in prange(origins.shape[0]):
        t, slot = ray_query(node_min, node_max, left, right, start, count, tris,
                            origins[i, 0], origins[i, 1], origins[i, 2],
                            directions[i, 0], directions[i, 1], directions[i, 2])
        out_t[i] = t
        out_slot[i] = slot


@njit(cache=True)
def farthest_point_indices(points, k, start):
    """Greedy max-min selection; ties resolved to the lowest index."""
    n = points.shape[0]
    out = np.empty(k, np.int64)
    dist = np.full(n, _FAR)
    cur = start
    out[0] = cur
    dist[cur] = -1.0
    for i in range(1, k):
        best = -2.0
        pick = -1
        for j in range(n):
            if dist[j] >= 0.0:
                dx = points[j, 0] - points[cur, 0]
                dy = points[j, 1] - points[cur, 1]
                dz = points[j, 2] - points[cur, 2]
                d = dx * dx + dy * dy + dz * dz
                if d < dist[j]:
                    dist[j] = d
            if dist[j] > best:
                best = dist[j]
                pick = j
        out[i] = pick
        dist[pick] = -1.0
        cur = pick
    return out
