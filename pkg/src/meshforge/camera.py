"""Camera rigs for condition rendering and texture baking.

Condition rigs place cameras on a sphere via the Hammersley point set with
a random toroidal offset; each camera draws its own field of view and gets
the radius that makes the normalization cube's bounding sphere exactly
fill the frame, r = R / sin(fov/2) with R = sqrt(3)/2. Texture rigs use
fixed elevation rings; reference views add stochastic light metadata.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .rng import RngStream, STREAM_CAMERAS

BOUND_RADIUS = math.sqrt(3.0) / 2.0  # bounding sphere of the side-1 cube
DEFAULT_IMAGE_SIZE = (512, 512)
DEFAULT_FOV_RANGE_DEG = (10.0, 70.0)
TEXTURE_FOV_DEG = 40.0
TEXTURE_FIXED_ELEVATIONS_DEG = (-20.0, 0.0, 20.0)
TEXTURE_AZIMUTH_COUNT = 24
REFERENCE_ELEVATION_RANGE_DEG = (-30.0, 70.0)
POINT_LIGHT_PROBABILITY = 0.3


@dataclass(frozen=True)
class CameraSpec:
    """Pinhole camera pose and intrinsics (vertical fov, square pixels)."""

    position: np.ndarray
    target: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    fov_deg: float = 40.0
    radius: Optional[float] = None
    width: int = DEFAULT_IMAGE_SIZE[0]
    height: int = DEFAULT_IMAGE_SIZE[1]

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        tgt = np.asarray(self.target, dtype=np.float64).reshape(3)
        up = np.asarray(self.up, dtype=np.float64).reshape(3)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "up", up / np.linalg.norm(up))
        dist = float(np.linalg.norm(pos - tgt))
        radius = dist if self.radius is None else float(self.radius)
        if abs(dist - radius) > 1e-9:
            raise ValueError("radius must equal |position - target|")
        object.__setattr__(self, "radius", radius)
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov must lie in (0, 180) degrees")
        view = tgt - pos
        if np.linalg.norm(np.cross(view, self.up)) <= 1e-12 * np.linalg.norm(view):
            raise ValueError("view direction is parallel to the up hint")

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "target": self.target.tolist(),
            "up": self.up.tolist(),
            "fov_deg": self.fov_deg,
            "radius": self.radius,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraSpec":
        return cls(
            np.asarray(d["position"]), np.asarray(d["target"]), np.asarray(d["up"]),
            float(d["fov_deg"]), float(d["radius"]), int(d["width"]), int(d["height"]),
        )


@dataclass(frozen=True)
class LightSpec:
    """Stochastic light metadata for reference views (no rendering here)."""

    kind: str  # "point" | "hdr"
    parameters: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters}


def radical_inverse(base: int, i: int) -> float:
    """Digit reversal of i in the given base, read as a fraction in [0, 1)."""
    if base < 2:
        raise ValueError("base must be >= 2")
    if i < 0:
        raise ValueError("index must be >= 0")
    inv = 1.0 / base
    result = 0.0
    f = inv
    while i:
        result += (i % base) * f
        i //= base
        f *= inv
    return result


def hammersley_sphere(n: int, offset: Tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """n unit directions from the offset Hammersley set via the area-
    preserving cylindrical map z = 1 - 2a, phi = 2*pi*b."""
    if n < 1:
        raise ValueError("need at least one direction")
    u, v = float(offset[0]), float(offset[1])
    i = np.arange(n)
    a = (i / n + u) % 1.0
    b = (np.array([radical_inverse(2, int(k)) for k in i]) + v) % 1.0
    z = 1.0 - 2.0 * a
    phi = 2.0 * np.pi * b
    s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def radius_for_fov(fov_deg: float, bound_radius: float = BOUND_RADIUS) -> float:
    """Distance at which a sphere of bound_radius exactly fills the fov."""
    if not 0.0 < fov_deg < 180.0:
        raise ValueError("fov must lie in (0, 180) degrees")
    return bound_radius / math.sin(math.radians(fov_deg) / 2.0)


def _safe_up(direction: np.ndarray) -> np.ndarray:
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(direction @ up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    return up


def build_condition_rig(
    n: int = 150,
    seed: int = 0,
    image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE,
    fov_range_deg: Tuple[float, float] = DEFAULT_FOV_RANGE_DEG,
    bound_radius: float = BOUND_RADIUS,
) -> List[CameraSpec]:
    """Sphere rig with randomized offset and per-camera fov / framing radius."""
    if n < 1:
        raise ValueError("need at least one camera")
    gen = RngStream(seed, STREAM_CAMERAS).generator()
    offset = tuple(gen.random(2))
    fovs = gen.uniform(fov_range_deg[0], fov_range_deg[1], size=n)
    dirs = hammersley_sphere(n, offset)
    cams = []
    for d, fov in zip(dirs, fovs):
        r = radius_for_fov(float(fov), bound_radius)
        cams.append(CameraSpec(
            position=r * d, target=np.zeros(3), up=_safe_up(d),
            fov_deg=float(fov), radius=r,
            width=image_size[0], height=image_size[1],
        ))
    return cams


def condition_rig_offset(seed: int) -> Tuple[float, float]:
    """The toroidal offset a condition rig with this seed used."""
    gen = RngStream(seed, STREAM_CAMERAS).generator()
    u, v = gen.random(2)
    return float(u), float(v)


def _orbit_position(elevation_deg: float, azimuth_deg: float, radius: float) -> np.ndarray:
    e = math.radians(elevation_deg)
    a = math.radians(azimuth_deg)
    return radius * np.array(
        [math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)]
    )


def build_texture_rig(
    seed: int = 0,
    fov_deg: float = TEXTURE_FOV_DEG,
    image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE,
    radius: Optional[float] = None,
) -> List[CameraSpec]:
    """96 cameras: elevations (-20, 0, 20, random in [-30, 70]) x 24 azimuths."""
    gen = RngStream(seed, STREAM_CAMERAS).generator()
    random_elevation = float(gen.uniform(*REFERENCE_ELEVATION_RANGE_DEG))
    r = radius_for_fov(fov_deg) if radius is None else float(radius)
    elevations = list(TEXTURE_FIXED_ELEVATIONS_DEG) + [random_elevation]
    azimuths = [360.0 * k / TEXTURE_AZIMUTH_COUNT for k in range(TEXTURE_AZIMUTH_COUNT)]
    return [
        CameraSpec(
            position=_orbit_position(e, a, r), target=np.zeros(3),
            up=np.array([0.0, 0.0, 1.0]), fov_deg=fov_deg, radius=r,
            width=image_size[0], height=image_size[1],
        )
        for e in elevations
        for a in azimuths
    ]


def sample_reference_view(rng: RngStream,
                          fov_deg: float = TEXTURE_FOV_DEG,
                          image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE,
                          ) -> Tuple[CameraSpec, LightSpec]:
    """One random viewpoint plus a light draw: point with p=0.3, hdr with p=0.7."""
    gen = rng.generator()
    elevation = float(gen.uniform(*REFERENCE_ELEVATION_RANGE_DEG))
    azimuth = float(gen.uniform(0.0, 360.0))
    r = radius_for_fov(fov_deg)
    cam = CameraSpec(
        position=_orbit_position(elevation, azimuth, r), target=np.zeros(3),
        up=np.array([0.0, 0.0, 1.0]), fov_deg=fov_deg, radius=r,
        width=image_size[0], height=image_size[1],
    )
    if gen.random() < POINT_LIGHT_PROBABILITY:
        direction = gen.standard_normal(3)
        direction /= np.linalg.norm(direction)
        light = LightSpec("point", {
            "position": (float(gen.uniform(2.0, 4.0)) * direction).tolist(),
            "intensity": float(gen.uniform(1.0, 5.0)),
        })
    else:
        light = LightSpec("hdr", {"environment_id": int(gen.integers(0, 100))})
    return cam, light


def look_at_matrix(spec: CameraSpec) -> np.ndarray:
    """World-to-camera transform; right-handed, camera looks down -z."""
    forward = spec.target - spec.position
    norm = np.linalg.norm(forward)
    forward = forward / norm
    side = np.cross(forward, spec.up)
    side_norm = np.linalg.norm(side)
    if side_norm <= 1e-12:
        raise ValueError("degenerate up/view alignment")
    side /= side_norm
    up = np.cross(side, forward)
    m = np.eye(4)
    m[0, :3] = side
    m[1, :3] = up
    m[2, :3] = -forward
    m[:3, 3] = -m[:3, :3] @ spec.position
    return m


def rig_to_dict(cameras: Sequence[CameraSpec], seed: int = None,
                offset: Tuple[float, float] = None,
                lights: Sequence[LightSpec] = None) -> dict:
    rig = {"cameras": [c.to_dict() for c in cameras]}
    if seed is not None:
        rig["seed"] = seed
    if offset is not None:
        rig["offset"] = [float(offset[0]), float(offset[1])]
    if lights is not None:
        rig["lights"] = [l.to_dict() for l in lights]
    return rig


def save_rig(path, cameras: Sequence[CameraSpec], **meta) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(cameras, **meta),
                                     indent=2, sort_keys=True) + "\n")


def load_rig(path) -> List[CameraSpec]:
    data = json.loads(Path(path).read_text())
    return [CameraSpec.from_dict(c) for c in data["cameras"]]
