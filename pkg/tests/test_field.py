"""BVH queries, winding numbers, signed distance, and grid baking."""
import numpy as np
import pytest

from meshforge import (
    Aabb,
    Mesh,
    bake_sdf_grid,
    build_bvh,
    closest_point,
    load_sdf_grid,
    save_sdf_grid,
    signed_distance,
    signed_distance_many,
    winding_number,
)
from meshforge import primitives
from meshforge.mesh import MeshError

from conftest import (
    ref_closest_distance,
    ref_point_triangle_distance,
    ref_ray_parity_inside,
    ref_winding_number,
)


def test_bvh_single_triangle():
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    bvh = build_bvh(mesh)
    assert bvh.num_nodes == 1
    assert bvh.leaf_ranges() == [(0, 1)]
    rng = np.random.default_rng(0)
    for q in rng.uniform(-2, 2, (50, 3)):
        _, dist, face = closest_point(bvh, q)
        assert face == 0
        assert dist == pytest.approx(
            ref_point_triangle_distance(mesh.face_corners()[0], q), abs=1e-12)


def test_bvh_conserves_triangles(cube_bvh):
    ranges = cube_bvh.leaf_ranges()
    assert sum(c for _, c in ranges) == 12
    covered = sorted(i for s, c in ranges for i in range(s, s + c))
    assert covered == list(range(12))
    assert sorted(cube_bvh.order.tolist()) == list(range(12))


def test_bvh_nodes_contain_children(cube_bvh):
    b = cube_bvh
    for node in range(b.num_nodes):
        if b.left[node] >= 0:
            for child in (b.left[node], b.right[node]):
                assert np.all(b.node_min[node] <= b.node_min[child] + 1e-12)
                assert np.all(b.node_max[node] >= b.node_max[child] - 1e-12)
        else:
            s, c = b.start[node], b.count[node]
            tris = b.tris[s:s + c]
            assert np.all(tris.reshape(-1, 3) >= b.node_min[node] - 1e-12)
            assert np.all(tris.reshape(-1, 3) <= b.node_max[node] + 1e-12)


def test_bvh_empty_mesh_errors():
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(MeshError):
        build_bvh(mesh)


def test_closest_point_matches_brute_force_icosphere(icosphere_20k, icosphere_20k_bvh):
    rng = np.random.default_rng(7)
    queries = rng.uniform(-1, 1, (1000, 3))
    for q in queries[:50]:
        _, dist, _ = closest_point(icosphere_20k_bvh, q)
        assert dist == pytest.approx(ref_closest_distance(icosphere_20k, q), abs=1e-9)
    # Bulk check over all 1000 via the kernel path.
    sd = np.abs(signed_distance_many(icosphere_20k_bvh, queries))
    analytic = np.abs(np.linalg.norm(queries, axis=1) - 0.4)
    assert np.max(np.abs(sd - analytic)) < 2e-3


def test_closest_point_on_surface_is_zero(cube_bvh):
    _, dist, _ = closest_point(cube_bvh, (0.5, 0.1, -0.2))
    assert dist == pytest.approx(0.0, abs=1e-12)


def test_closest_point_cube_center(cube_bvh):
    point, dist, _ = closest_point(cube_bvh, (0.0, 0.0, 0.0))
    assert dist == pytest.approx(0.5, abs=1e-12)
    assert np.max(np.abs(point)) == pytest.approx(0.5, abs=1e-12)


def test_closest_point_random_fixture_brute_force(icosphere_small):
    bvh = build_bvh(icosphere_small)
    rng = np.random.default_rng(11)
    for q in rng.uniform(-1.5, 1.5, (200, 3)):
        _, dist, _ = closest_point(bvh, q)
        assert dist == pytest.approx(ref_closest_distance(icosphere_small, q), abs=1e-9)


# ---------------------------------------------------------------------------
# winding number


def test_winding_inside_cube(cube_bvh):
    assert winding_number(cube_bvh, (0, 0, 0)) == pytest.approx(1.0, abs=1e-6)


def test_winding_outside_cube(cube_bvh):
    assert winding_number(cube_bvh, (2, 0, 0)) == pytest.approx(0.0, abs=1e-6)


def test_winding_face_center_half(cube_bvh):
    assert winding_number(cube_bvh, (0, 0, 0.5)) == pytest.approx(0.5, abs=1e-6)


def test_winding_bvh_matches_direct_sum(icosphere_mid):
    bvh = build_bvh(icosphere_mid)
    rng = np.random.default_rng(2)
    queries = np.concatenate([
        rng.uniform(-1, 1, (40, 3)),
        rng.normal(scale=0.02, size=(40, 3)) + np.array([0.4, 0, 0]),
    ])
    for q in queries:
        hier = winding_number(bvh, q)
        assert hier == pytest.approx(ref_winding_number(icosphere_mid, q), abs=1e-9)
        assert hier == pytest.approx(winding_number(bvh, q, method="direct"), abs=1e-9)


def test_winding_parity_agreement(icosphere_mid):
    bvh = build_bvh(icosphere_mid)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, (10_000, 3))
    radii = np.linalg.norm(pts, axis=1)
    pts = pts[np.abs(radii - 0.4) > 1e-4]
    sd = signed_distance_many(bvh, pts)
    for q, s in zip(pts[:500], sd[:500]):
        assert (s < 0) == ref_ray_parity_inside(icosphere_mid, q)
    # Against the analytic ball, outside the tessellation band (the
    # subdiv-3 icosphere deviates from the sphere by up to ~1e-3).
    radii = np.linalg.norm(pts, axis=1)
    clear = np.abs(radii - 0.4) > 2e-3
    assert np.array_equal((sd < 0)[clear], (radii < 0.4)[clear])


# ---------------------------------------------------------------------------
# signed distance


def test_signed_distance_cube_center(cube_bvh):
    assert signed_distance(cube_bvh, (0, 0, 0)) == pytest.approx(-0.5, abs=1e-12)


def test_signed_distance_cube_outside(cube_bvh):
    assert signed_distance(cube_bvh, (1, 0, 0)) == pytest.approx(0.5, abs=1e-12)


def test_signed_distance_sphere_analytic(icosphere_20k, icosphere_20k_bvh):
    rng = np.random.default_rng(13)
    q = rng.uniform(-1, 1, (10_000, 3))
    sd = signed_distance_many(icosphere_20k_bvh, q)
    analytic = np.linalg.norm(q, axis=1) - 0.4
    assert np.max(np.abs(sd - analytic)) < 2e-3


def test_signed_distance_translation_invariant(icosphere_small):
    bvh = build_bvh(icosphere_small)
    offset = np.array([0.31, -1.7, 0.05])
    moved = build_bvh(icosphere_small.translated(offset))
    rng = np.random.default_rng(17)
    for q in rng.uniform(-1, 1, (50, 3)):
        assert signed_distance(moved, q + offset) == pytest.approx(
            signed_distance(bvh, q), abs=1e-9)


def test_signed_distance_scale_equivariant(icosphere_small):
    bvh = build_bvh(icosphere_small)
    s = 2.75
    scaled = build_bvh(icosphere_small.scaled(s))
    rng = np.random.default_rng(19)
    for q in rng.uniform(-1, 1, (50, 3)):
        got = signed_distance(scaled, q * s)
        want = signed_distance(bvh, q) * s
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_scalar_and_bulk_signed_distance_agree(icosphere_small):
    bvh = build_bvh(icosphere_small)
    rng = np.random.default_rng(23)
    q = rng.uniform(-1, 1, (100, 3))
    bulk = signed_distance_many(bvh, q)
    for i in range(0, 100, 7):
        assert bulk[i] == pytest.approx(signed_distance(bvh, q[i]), abs=1e-12)


# ---------------------------------------------------------------------------
# grid baking


@pytest.fixture(scope="module")
def sphere_grid_64():
    mesh = primitives.icosphere(radius=0.4, subdivisions=4)
    bvh = build_bvh(mesh)
    return bake_sdf_grid(bvh, (64, 64, 64), Aabb((-1, -1, -1), (1, 1, 1)))


def test_grid_corner_value(sphere_grid_64):
    assert sphere_grid_64.values[0, 0, 0] == pytest.approx(np.sqrt(3) - 0.4, abs=5e-3)


def test_grid_value_near_origin(sphere_grid_64):
    # 64 lattice points put the nearest to the origin at |q| = sqrt(3)/63.
    got = sphere_grid_64.values[32, 32, 32]
    assert got == pytest.approx(np.sqrt(3) / 63 - 0.4, abs=2e-3)
    assert got == pytest.approx(-0.4, abs=0.05)


def test_grid_sign_changes_along_rows(sphere_grid_64):
    for axis in range(3):
        row = np.moveaxis(sphere_grid_64.values, axis, 0)[:, 32, 32]
        changes = int(np.sum(np.sign(row[:-1]) != np.sign(row[1:])))
        assert changes >= 2


def test_grid_lattice_mapping(sphere_grid_64):
    pts = sphere_grid_64.lattice_points()
    assert np.allclose(pts[0], [-1, -1, -1])
    assert np.allclose(pts[-1], [1, 1, 1])
    assert pts.shape == (64 ** 3, 3)


def test_grid_matches_pointwise_signed_distance(icosphere_small):
    bvh = build_bvh(icosphere_small)
    grid = bake_sdf_grid(bvh, (8, 9, 10), Aabb((-1, -1, -1), (1, 1, 1)))
    pts = grid.lattice_points()
    direct = signed_distance_many(bvh, pts)
    assert np.allclose(grid.values.ravel(), direct.astype(np.float32), atol=1e-6)


def test_grid_requires_containing_bounds(icosphere_small):
    bvh = build_bvh(icosphere_small)
    with pytest.raises(ValueError, match="strictly contain"):
        bake_sdf_grid(bvh, (8, 8, 8), Aabb((-0.3, -1, -1), (1, 1, 1)))
    with pytest.raises(ValueError, match="resolution"):
        bake_sdf_grid(bvh, (1, 8, 8), Aabb((-1, -1, -1), (1, 1, 1)))


def test_grid_serialization_round_trip(tmp_path, icosphere_small):
    bvh = build_bvh(icosphere_small)
    grid = bake_sdf_grid(bvh, (6, 7, 8), Aabb((-1, -1, -1), (1, 1, 1)))
    payload, meta = save_sdf_grid(grid, tmp_path / "g.f32")
    loaded = load_sdf_grid(meta)
    assert loaded.resolution == grid.resolution
    assert np.array_equal(loaded.values, grid.values)
    assert np.allclose(loaded.bounds.min, grid.bounds.min)
    # x-fastest on disk: first payload floats walk the x axis.
    raw = np.frombuffer(payload.read_bytes(), dtype="<f4")
    assert np.array_equal(raw[:6], grid.values[:, 0, 0])
