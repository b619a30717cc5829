"""Hammersley rigs, framing law, texture/reference rigs, look-at."""
import numpy as np
import pytest
from scipy.stats import kstest

from meshforge import (
    CameraSpec,
    RngStream,
    build_condition_rig,
    build_texture_rig,
    hammersley_sphere,
    look_at_matrix,
    radical_inverse,
    radius_for_fov,
    sample_reference_view,
)
from meshforge.camera import BOUND_RADIUS, condition_rig_offset
from meshforge.rng import STREAM_LIGHTS


def test_radical_inverse_exact_values():
    assert radical_inverse(2, 0) == 0.0
    assert radical_inverse(2, 1) == 0.5
    assert radical_inverse(2, 2) == 0.25
    assert radical_inverse(2, 3) == 0.75
    assert radical_inverse(2, 5) == 0.625
    assert radical_inverse(3, 1) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        radical_inverse(1, 0)


def test_hammersley_first_direction_is_pole():
    dirs = hammersley_sphere(1, (0.0, 0.0))
    assert np.allclose(dirs[0], [0, 0, 1])


def test_hammersley_n2_hand_evaluation():
    dirs = hammersley_sphere(2, (0.0, 0.0))
    # i=1: a=0.5 -> z=0; b=0.5 -> phi=pi -> (-1, 0, 0).
    assert np.allclose(dirs[1], [-1, 0, 0], atol=1e-12)


def test_hammersley_near_uniform_coverage():
    dirs = hammersley_sphere(150, (0.0, 0.0))
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(dirs.mean(axis=0)) < 0.05


def _max_marginal_gap(values):
    s = np.sort(values)
    gaps = np.diff(s)
    wrap = s[0] + 1.0 - s[-1]
    return max(float(gaps.max()), float(wrap))


def test_hammersley_discrepancy_dominates_random():
    n = 150
    ham = np.stack([
        (np.arange(n) / n) % 1.0,
        np.array([radical_inverse(2, i) for i in range(n)]),
    ], axis=1)
    ham_stat = max(_max_marginal_gap(ham[:, 0]), _max_marginal_gap(ham[:, 1]))
    rng = np.random.default_rng(0)
    random_stats = [
        max(_max_marginal_gap(u[:, 0]), _max_marginal_gap(u[:, 1]))
        for u in rng.random((100, n, 2))
    ]
    assert ham_stat < np.median(random_stats)


def test_sphere_map_z_equidistributed():
    rng = np.random.default_rng(1)
    pvalues = []
    for _ in range(100):
        offset = tuple(rng.random(2))
        z = hammersley_sphere(150, offset)[:, 2]
        pvalues.append(kstest(z, "uniform", args=(-1, 2)).pvalue)
    assert np.mean(pvalues) > 0.01


# ---------------------------------------------------------------------------
# framing law


def test_radius_for_fov_endpoints():
    assert radius_for_fov(70.0) == pytest.approx(1.51, abs=0.005)
    assert radius_for_fov(10.0) == pytest.approx(9.94, abs=0.01)


def test_radius_for_fov_wide_limit():
    assert radius_for_fov(179.999) == pytest.approx(BOUND_RADIUS, rel=1e-6)
    with pytest.raises(ValueError):
        radius_for_fov(0.0)
    with pytest.raises(ValueError):
        radius_for_fov(180.0)


# ---------------------------------------------------------------------------
# condition rig


def test_condition_rig_defaults():
    rig = build_condition_rig(seed=3)
    assert len(rig) == 150
    radii = np.array([c.radius for c in rig])
    fovs = np.array([c.fov_deg for c in rig])
    assert np.all((radii >= 1.505) & (radii <= 9.94))
    assert np.all((fovs >= 10.0) & (fovs <= 70.0))
    for cam in rig:
        assert cam.width == 512 and cam.height == 512
        assert np.allclose(cam.target, 0.0)


def test_condition_rig_framing_law_invariant():
    for cam in build_condition_rig(seed=11):
        want = BOUND_RADIUS / np.sin(np.radians(cam.fov_deg) / 2.0)
        assert cam.radius == pytest.approx(want, abs=1e-6)
        assert np.linalg.norm(cam.position) == pytest.approx(cam.radius, abs=1e-9)


def test_condition_rig_deterministic():
    a = build_condition_rig(seed=5)
    b = build_condition_rig(seed=5)
    assert all(np.array_equal(x.position, y.position) and x.fov_deg == y.fov_deg
               for x, y in zip(a, b))
    c = build_condition_rig(seed=6)
    assert not np.array_equal(a[0].position, c[0].position)
    assert condition_rig_offset(5) == condition_rig_offset(5)


# ---------------------------------------------------------------------------
# texture rig / reference view


def test_texture_rig_shape():
    rig = build_texture_rig(seed=9)
    assert len(rig) == 96
    elevations = np.degrees(np.arcsin(
        np.array([c.position[2] for c in rig]) / np.array([c.radius for c in rig])))
    rounded = sorted(set(np.round(elevations, 6)))
    assert len(rounded) == 4
    for fixed in (-20.0, 0.0, 20.0):
        assert any(abs(e - fixed) < 1e-6 for e in rounded)
    random_e = [e for e in rounded if min(abs(e + 20), abs(e), abs(e - 20)) > 1e-6]
    assert len(random_e) == 1 and -30.0 <= random_e[0] <= 70.0


def test_texture_rig_azimuths_per_elevation():
    rig = build_texture_rig(seed=2)
    for ring in range(4):
        cams = rig[ring * 24:(ring + 1) * 24]
        azimuths = sorted(
            np.round(np.degrees(np.arctan2(
                [c.position[1] for c in cams], [c.position[0] for c in cams])) % 360, 6))
        assert azimuths == [15.0 * k for k in range(24)]


def test_texture_rig_image_size_and_radius():
    rig = build_texture_rig(seed=1)
    for cam in rig:
        assert (cam.width, cam.height) == (512, 512)
        assert cam.fov_deg == pytest.approx(40.0)
        assert cam.radius == pytest.approx(radius_for_fov(40.0), abs=1e-9)


def test_reference_view_light_fraction():
    point = 0
    for i in range(10_000):
        _, light = sample_reference_view(RngStream(i, STREAM_LIGHTS))
        point += light.kind == "point"
    assert abs(point / 10_000 - 0.30) <= 0.02


def test_reference_view_elevation_range_and_determinism():
    for i in range(200):
        cam, _ = sample_reference_view(RngStream(i, STREAM_LIGHTS))
        elevation = np.degrees(np.arcsin(cam.position[2] / cam.radius))
        assert -30.0 - 1e-9 <= elevation <= 70.0 + 1e-9
    a_cam, a_light = sample_reference_view(RngStream(42, STREAM_LIGHTS))
    b_cam, b_light = sample_reference_view(RngStream(42, STREAM_LIGHTS))
    assert np.array_equal(a_cam.position, b_cam.position)
    assert a_light.kind == b_light.kind


# ---------------------------------------------------------------------------
# look_at


def test_look_at_maps_target_to_depth_axis():
    spec = CameraSpec(position=(0, 0, 2), target=(0, 0, 0), up=(0, 1, 0), fov_deg=60)
    m = look_at_matrix(spec)
    assert np.allclose(m @ [0, 0, 0, 1], [0, 0, -2, 1], atol=1e-12)


def test_look_at_rotation_orthonormal():
    spec = CameraSpec(position=(1.3, -0.4, 2.2), target=(0.1, 0.2, -0.3),
                      up=(0, 0, 1), fov_deg=45)
    rot = look_at_matrix(spec)[:3, :3]
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-9)


def test_look_at_round_trip():
    spec = CameraSpec(position=(0.5, 1.5, -2.0), target=(0, 0, 0),
                      up=(0, 0, 1), fov_deg=30)
    m = look_at_matrix(spec)
    inv = np.linalg.inv(m)
    assert np.allclose((inv @ [0, 0, 0, 1])[:3], spec.position, atol=1e-9)


def test_look_at_degenerate_up_errors():
    with pytest.raises(ValueError):
        CameraSpec(position=(0, 0, 2), target=(0, 0, 0), up=(0, 0, 1), fov_deg=60)


def test_camera_spec_validates_radius():
    with pytest.raises(ValueError):
        CameraSpec(position=(0, 0, 2), target=(0, 0, 0), up=(0, 1, 0),
                   fov_deg=60, radius=3.0)
