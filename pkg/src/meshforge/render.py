"""Raycast condition renderer: depth, world-space normal, silhouette mask.

One primary ray per pixel center through a pinhole with the camera's
vertical fov; the nearest hit records Euclidean camera-to-hit distance and
the geometric face normal. No shading and no lights. Rendering is pure per
pixel, so output never depends on the thread schedule.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from PIL import Image

from . import _kernels
from .bvh import Bvh
from .camera import CameraSpec, look_at_matrix

_MISS = np.inf


@dataclass(frozen=True)
class RenderBuffers:
    """Per-pixel geometry channels; mask true exactly where depth is finite."""

    width: int
    height: int
    depth: np.ndarray    # (H, W) float64, +inf at misses
    normal: np.ndarray   # (H, W, 3) float64, zero at misses
    mask: np.ndarray     # (H, W) bool

    def coverage(self) -> float:
        return float(self.mask.mean())


def camera_rays(spec: CameraSpec):
    """Pixel-center ray origins/directions in world space."""
    w, h = spec.width, spec.height
    aspect = w / h
    tan_half = np.tan(np.radians(spec.fov_deg) / 2.0)
    px = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    py = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    xs, ys = np.meshgrid(px * tan_half * aspect, py * tan_half)
    dirs_cam = np.stack([xs, ys, -np.ones_like(xs)], axis=-1).reshape(-1, 3)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1)[:, None]
    rot = look_at_matrix(spec)[:3, :3]
    dirs_world = dirs_cam @ rot  # rows through R^T: camera -> world
    origins = np.broadcast_to(spec.position, dirs_world.shape)
    return np.ascontiguousarray(origins), np.ascontiguousarray(dirs_world)


def render(bvh: Bvh, spec: CameraSpec) -> RenderBuffers:
    """Nearest-hit raycast of every pixel."""
    origins, dirs = camera_rays(spec)
    n = origins.shape[0]
    t = np.empty(n)
    slot = np.empty(n, dtype=np.int64)
    _kernels.raycast_many(*bvh.query_arrays(), origins, dirs, t, slot)
    hit = slot >= 0
    depth = np.where(hit, t, _MISS).reshape(spec.height, spec.width)
    normals = np.zeros((n, 3))
    if np.any(hit):
        face_normals = bvh.mesh.face_normals()
        normals[hit] = face_normals[bvh.order[slot[hit]]]
    return RenderBuffers(
        spec.width, spec.height, depth,
        normals.reshape(spec.height, spec.width, 3),
        hit.reshape(spec.height, spec.width),
    )


def encode_mask(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 255, 0).astype(np.uint8)


def encode_normal(normal: np.ndarray) -> np.ndarray:
    """Map unit components from [-1, 1] to [0, 255], rounded to nearest."""
    return np.rint((normal + 1.0) / 2.0 * 255.0).clip(0, 255).astype(np.uint8)


def decode_normal(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) / 255.0 * 2.0 - 1.0


def encode_depth(depth: np.ndarray, near: float, far: float) -> np.ndarray:
    """16-bit normalization over [near, far]; misses clamp to 65535."""
    span = max(far - near, 1e-12)
    scaled = (depth - near) / span
    scaled = np.where(np.isfinite(depth), scaled, 1.0)
    return np.rint(np.clip(scaled, 0.0, 1.0) * 65535.0).astype(np.uint16)


def decode_depth(img: np.ndarray, near: float, far: float) -> np.ndarray:
    return img.astype(np.float64) / 65535.0 * (far - near) + near


def depth_range(buffers: RenderBuffers):
    finite = buffers.depth[buffers.mask]
    if finite.size == 0:
        return 0.0, 1.0
    return float(finite.min()), float(finite.max())


def encode_lambert_preview(buffers: RenderBuffers,
                           light_dir=(0.408248, 0.408248, 0.816497)) -> np.ndarray:
    """Debug-only flat-lambert shading of the normal channel (two-sided)."""
    l = np.asarray(light_dir, dtype=np.float64)
    l /= np.linalg.norm(l)
    intensity = np.abs(buffers.normal @ l)
    intensity = np.where(buffers.mask, 0.15 + 0.85 * intensity, 0.0)
    return np.rint(np.clip(intensity, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_images(buffers: RenderBuffers, directory, view_index: int,
                 camera: Optional[CameraSpec] = None,
                 preview: bool = False) -> Dict[str, Path]:
    """PNG triplet plus a JSON sidecar with the depth normalization range."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"view_{view_index:03d}"
    near, far = depth_range(buffers)
    paths = {
        "mask": directory / f"{stem}_mask.png",
        "normal": directory / f"{stem}_normal.png",
        "depth": directory / f"{stem}_depth.png",
        "meta": directory / f"{stem}.json",
    }
    Image.fromarray(encode_mask(buffers.mask), mode="L").save(paths["mask"])
    Image.fromarray(encode_normal(buffers.normal), mode="RGB").save(paths["normal"])
    depth16 = encode_depth(buffers.depth, near, far)
    Image.fromarray(depth16).save(paths["depth"])  # uint16 -> 16-bit grayscale
    if preview:
        paths["preview"] = directory / f"{stem}_preview.png"
        Image.fromarray(encode_lambert_preview(buffers), mode="L").save(paths["preview"])
    meta = {
        "view": view_index,
        "depth_near": near,
        "depth_far": far,
        "depth_encoding": "uint16 over [near, far]; misses = 65535",
        "normal_encoding": "uint8 (n+1)/2*255, rounded; misses = (128,128,128)",
    }
    if camera is not None:
        meta["camera"] = camera.to_dict()
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths
