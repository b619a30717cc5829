"""Acceptance criteria, one test per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Tolerances are pinned here and nowhere else.
"""
import json
import time

import numpy as np
import pytest

from meshforge import (
    AffineVelocity,
    CallableVelocity,
    Mesh,
    PipelineConfig,
    SdfGrid,
    TanhMLPVelocity,
    TrainConfig,
    build_texture_rig,
    check_watertight,
    euler_sample,
    farthest_point_sampling,
    kl_diag_gaussian,
    make_watertight,
    marching_cubes,
    mesh_volume,
    normalize_mesh,
    process_asset,
    radical_inverse,
    radius_for_fov,
    run_batch,
    sample_reference_view,
    signed_distance_many,
    train_toy,
)
from meshforge import primitives
from meshforge.arrayio import hash_tree
from meshforge.field import Aabb
from meshforge.flowmatch import (
    FlowBatch,
    GaussianLatentStats,
    check_gradients,
    gaussian_shift_sampler,
)
from meshforge.meshio import write_obj
from meshforge.rng import RngStream, STREAM_LIGHTS

from test_camera import _max_marginal_gap
from test_sampler import ref_fps


def _ok(n, message):
    print(f"\n[criterion {n:2d}] PASS - {message}")


def test_criterion_01_camera_framing_endpoints():
    r70 = radius_for_fov(70.0)
    r10 = radius_for_fov(10.0)
    assert r70 == pytest.approx(1.51, abs=0.005)
    assert r10 == pytest.approx(9.94, abs=0.01)
    _ok(1, f"radius(70deg)={r70:.4f}, radius(10deg)={r10:.4f}")


def test_criterion_02_default_pipeline_counts(tmp_path):
    write_obj(tmp_path / "ball.obj",
              primitives.icosphere(radius=0.8, subdivisions=2))
    config = PipelineConfig(grid_resolution=128, render_width=256,
                            render_height=256, seed=0)
    t0 = time.perf_counter()
    record = process_asset(tmp_path / "ball.obj", tmp_path / "out", config)
    elapsed = time.perf_counter() - t0
    assert record.status == "ok", record.error
    assert record.counts["query_near_surface"] == 249_856
    assert record.counts["query_uniform_volume"] == 249_856
    assert record.counts["query_points"] == 499_712
    assert record.counts["surface_points"] == 124_928
    assert record.counts["views"] == 150
    assert elapsed < 120.0
    _ok(2, f"249856+249856 queries, 124928 surface, 150 views in {elapsed:.1f}s")


def _defective_fixtures():
    rng = np.random.default_rng(0)
    ico = primitives.icosphere(radius=0.45, subdivisions=2)

    def duplicated_faces():
        faces = np.concatenate([ico.faces, ico.faces[::5]], axis=0)
        return Mesh(ico.vertices, faces)

    def flipped_patch():
        faces = np.array(ico.faces)
        k = len(faces) // 10
        faces[:k] = faces[:k][:, ::-1]
        return Mesh(ico.vertices, faces)

    def unwelded_soup():
        tri = ico.face_corners().reshape(-1, 3)
        faces = np.arange(tri.shape[0]).reshape(-1, 3)
        return Mesh(tri, faces)

    def interior_junk():
        shards = []
        for _ in range(12):
            center = rng.uniform(-0.15, 0.15, 3)
            shards.append(Mesh(center + rng.uniform(-0.04, 0.04, (3, 3)),
                               [[0, 1, 2]]))
        return primitives.merged(ico, *shards)

    def sliver_faces():
        base = np.array([[0.9, 0.0, 0.0], [0.901, 0.0, 0.0], [0.9005, 0.0, 0.0]])
        sliver = Mesh(base, [[0, 1, 2]])  # exactly colinear, zero area
        return primitives.merged(primitives.icosphere(0.45, 2), sliver)

    def touching_boxes():
        return primitives.merged(
            primitives.box((-0.5, -0.25, -0.25), (0.0, 0.25, 0.25)),
            primitives.box((0.0, -0.25, -0.25), (0.5, 0.25, 0.25)),
        )

    def rotated_cubes():
        a = primitives.box((-0.3, -0.3, -0.3), (0.3, 0.3, 0.3))
        theta = np.radians(30)
        rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                        [np.sin(theta), np.cos(theta), 0],
                        [0, 0, 1]])
        b = Mesh(a.vertices @ rot.T + np.array([0.2, 0.1, 0.0]), a.faces)
        return primitives.merged(a, b)

    return {
        "open-box-missing-face": primitives.open_box(remove=2),
        "cube-missing-one-triangle": primitives.open_box(remove=1),
        "overlapping-sphere-pair": primitives.merged(
            primitives.icosphere(0.3, 2, center=(-0.15, 0, 0)),
            primitives.icosphere(0.3, 2, center=(0.15, 0, 0))),
        "duplicated-faces": duplicated_faces(),
        "flipped-normal-patch": flipped_patch(),
        "touching-boxes-shared-face": touching_boxes(),
        "unwelded-soup": unwelded_soup(),
        "interior-junk-shards": interior_junk(),
        "rotated-overlapping-cubes": rotated_cubes(),
        "appended-zero-area-sliver": sliver_faces(),
    }


def test_criterion_03_watertighting_defective_fixtures():
    fixtures = _defective_fixtures()
    assert len(fixtures) == 10
    for name, mesh in fixtures.items():
        normalized, _ = normalize_mesh(mesh)
        out = make_watertight(normalized, resolution=(128, 128, 128))
        report = check_watertight(out)
        assert report.is_closed, f"{name}: open output"
        assert report.is_edge_manifold, f"{name}: non-manifold output"
        assert report.boundary_edge_count == 0, f"{name}: boundary edges"
    _ok(3, "10/10 defective fixtures became closed edge-manifold meshes at 128^3")


def test_criterion_04_sdf_oracle(icosphere_20k, icosphere_20k_bvh):
    assert icosphere_20k.num_faces == 20_480
    rng = np.random.default_rng(123)
    q = rng.uniform(-1, 1, (10_000, 3))
    sd = signed_distance_many(icosphere_20k_bvh, q)
    analytic = np.linalg.norm(q, axis=1) - 0.4
    worst = float(np.max(np.abs(sd - analytic)))
    assert worst < 2e-3

    clear = np.abs(analytic) > 1e-4
    inside_winding = sd[clear] < 0
    inside_analytic = analytic[clear] < 0
    agreement = float(np.mean(inside_winding == inside_analytic))
    assert agreement == 1.0
    _ok(4, f"max |sdf error| {worst:.2e} over 10k points; "
           f"inside/outside agreement 100% ({int(clear.sum())} points)")


def test_criterion_05_marching_cubes_volume():
    n = 128
    ax = np.linspace(-1, 1, n)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    grid = SdfGrid((n, n, n), Aabb((-1,) * 3, (1,) * 3),
                   np.sqrt(gx ** 2 + gy ** 2 + gz ** 2) - 0.3)
    mesh = marching_cubes(grid)
    volume = mesh_volume(mesh)
    report = check_watertight(mesh)
    assert volume == pytest.approx(0.113097, rel=0.01)
    assert report.euler_characteristic == 2
    _ok(5, f"volume {volume:.6f} (target 0.113097 within 1%), euler=2")


def test_criterion_06_fps_oracle_equivalence():
    rng = np.random.default_rng(77)
    for trial in range(100):
        n = int(rng.integers(2, 513))
        k = int(rng.integers(1, min(n, 64) + 1))
        pts = rng.uniform(-1, 1, (n, 3))
        assert np.array_equal(farthest_point_sampling(pts, k), ref_fps(pts, k)), \
            f"trial {trial}"
    colinear = np.zeros((10, 3))
    colinear[:, 0] = np.arange(10)
    assert farthest_point_sampling(colinear, 3).tolist() == [0, 9, 4]
    _ok(6, "FPS matches the O(N*k) oracle on 100 sets incl. the tie-break")


def test_criterion_07_hammersley_correctness():
    exact = {0: 0.0, 1: 0.5, 2: 0.25, 3: 0.75, 5: 0.625}
    for i, want in exact.items():
        assert radical_inverse(2, i) == want
    n = 150
    ham = np.stack([np.arange(n) / n,
                    np.array([radical_inverse(2, i) for i in range(n)])], axis=1)
    ham_stat = max(_max_marginal_gap(ham[:, 0]), _max_marginal_gap(ham[:, 1]))
    rng = np.random.default_rng(31)
    random_stats = sorted(
        max(_max_marginal_gap(u[:, 0]), _max_marginal_gap(u[:, 1]))
        for u in rng.random((100, n, 2)))
    median = random_stats[50]
    assert ham_stat < median
    _ok(7, f"radical_inverse exact; gap statistic {ham_stat:.4f} "
           f"< random median {median:.4f}")


def test_criterion_08_flow_matching():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    batch = FlowBatch(rng.normal(size=(32, 2)), rng.normal(size=(32, 2)),
                      rng.random(32))
    worst = max(
        check_gradients(AffineVelocity(2, init="random", seed=1), batch),
        check_gradients(TanhMLPVelocity(2, hidden=8, seed=2), batch),
    )
    assert worst < 1e-4

    x0 = rng.normal(size=(16, 2))
    x1 = rng.normal(size=(16, 2))
    oracle = CallableVelocity(lambda x, t, c: x1 - x0, dim=2)
    assert np.max(np.abs(euler_sample(oracle, x0, steps=1) - x1)) < 1e-12

    model = AffineVelocity(2)
    result = train_toy(model, gaussian_shift_sampler([3.0, 0.0]),
                       TrainConfig(lr=0.05, steps=500, batch=256, seed=0))
    ratio = result.loss_trace[-1] / result.loss_trace[0]
    assert ratio <= 0.10

    noise = np.random.default_rng(10).normal(size=(1000, 2))
    mean = euler_sample(model, noise, steps=50).mean(axis=0)
    offset = float(np.linalg.norm(mean - [3.0, 0.0]))
    assert offset < 0.1
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _ok(8, f"grad err {worst:.1e}; 1-step Euler exact; loss ratio {ratio:.3f}; "
           f"sampled mean off by {offset:.3f}; {elapsed:.1f}s")


def test_criterion_09_kl_closed_form():
    assert kl_diag_gaussian(GaussianLatentStats([1.0], [0.0])) == 0.5
    assert kl_diag_gaussian(GaussianLatentStats([0.0], [0.0])) == 0.0
    _ok(9, "KL(mu=1, logvar=0) = 0.5 exactly; KL(0, 0) = 0")


def test_criterion_10_batch_determinism_across_workers(tmp_path):
    write_obj(tmp_path / "ball.obj", primitives.icosphere(radius=0.8, subdivisions=2))
    write_obj(tmp_path / "box.obj", primitives.open_box(remove=2))
    manifest = tmp_path / "manifest.txt"
    manifest.write_text("ball.obj\nbox.obj\n")
    config = PipelineConfig(grid_resolution=48, n_near=2000, n_uniform=2000,
                            surface_total=2000, camera_count=4,
                            render_width=64, render_height=64,
                            fps_budget=128, seed=11)
    s1 = run_batch(manifest, tmp_path / "w1", config, workers=1)
    s2 = run_batch(manifest, tmp_path / "w2", config, workers=2)
    assert s1.ok == s2.ok == 2
    compared = 0
    for stem in ("ball", "box"):
        h1 = hash_tree(tmp_path / "w1" / stem, exclude=("manifest.json",))
        h2 = hash_tree(tmp_path / "w2" / stem, exclude=("manifest.json",))
        assert h1 == h2, f"{stem}: artifacts differ across worker counts"
        compared += len(h1)
    _ok(10, f"{compared} artifact files byte-identical for workers=1 vs workers=2")


def test_criterion_11_texture_rig_and_lights():
    rig = build_texture_rig(seed=4)
    assert len(rig) == 96
    elevations = np.degrees(np.arcsin(
        np.array([c.position[2] for c in rig]) / np.array([c.radius for c in rig])))
    for fixed in (-20.0, 0.0, 20.0):
        assert np.any(np.abs(elevations - fixed) < 1e-6)
    for ring in range(4):
        cams = rig[ring * 24:(ring + 1) * 24]
        azimuths = sorted(np.round(np.degrees(np.arctan2(
            [c.position[1] for c in cams],
            [c.position[0] for c in cams])) % 360, 6))
        assert azimuths == [15.0 * k for k in range(24)]
    assert all((c.width, c.height) == (512, 512) for c in rig)

    point = sum(
        sample_reference_view(RngStream(i, STREAM_LIGHTS))[1].kind == "point"
        for i in range(10_000))
    fraction = point / 10_000
    assert abs(fraction - 0.30) <= 0.02
    _ok(11, f"96 cameras, elevations/azimuths exact, 512x512; "
            f"point-light fraction {fraction:.3f}")
