"""End-to-end per-asset processing and batch orchestration.

process_asset runs load -> normalize -> watertight -> query sampling ->
surface sampling -> FPS -> camera rig -> renders, writing one record
directory per asset. Records are staged and renamed on success, so a
partially processed asset never becomes visible. Every byte of output is
a deterministic function of (input bytes, config, seed) regardless of
worker count; per-asset seeds are hashed from (global seed, asset id) so
manifest order never changes any asset's data.
"""
from __future__ import annotations

import json
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import arrayio
from .bvh import build_bvh
from .camera import (
    BOUND_RADIUS,
    CameraSpec,
    build_condition_rig,
    condition_rig_offset,
    radius_for_fov,
    save_rig,
)
from .field import bake_sdf_grid, save_sdf_grid
from .isosurface import check_watertight, marching_cubes
from .mesh import Aabb, Mesh, normalize_mesh
from .meshio import read_mesh, write_obj
from .render import render, write_images
from .rng import (
    RngStream,
    STREAM_CAMERAS,
    STREAM_NEAR,
    STREAM_SHARP,
    STREAM_SURFACE,
    STREAM_VOLUME,
    derive_seed,
)
from .sampler import (
    QuerySetConfig,
    build_query_set,
    farthest_point_sampling,
    sample_surface_sharp,
    sample_surface_uniform,
    save_query_set,
    save_surface_samples,
)

MANIFEST_NAME = "manifest.json"


@dataclass
class PipelineConfig:
    """Knobs for one pipeline run; defaults match the production recipe."""

    grid_resolution: int = 256
    n_near: int = 249_856
    n_uniform: int = 249_856
    surface_total: int = 124_928
    surface_uniform: Optional[int] = None   # default: 50/50 split
    surface_sharp: Optional[int] = None
    camera_count: int = 150
    render_width: int = 512
    render_height: int = 512
    fps_budget: int = 3072
    fps_uniform: Optional[int] = None       # default: even split
    fps_sharp: Optional[int] = None
    seed: int = 0
    query_composition: str = "near+uniform"
    near_sigmas: Tuple[float, float] = (0.01, 0.05)
    sharp_angle_deg: float = 30.0
    sharp_offset: float = 0.01
    query_bound: float = 1.0
    degenerate_policy: str = "drop"
    # Camera options.
    canonical_fov: Optional[float] = None   # also emit a fixed-fov rig
    tight_framing: bool = False             # frame the asset's own bounding sphere
    # Stage toggles.
    do_watertight: bool = True
    do_queries: bool = True
    do_surface: bool = True
    do_renders: bool = True
    save_grid: bool = False
    render_preview: bool = False            # extra flat-lambert debug PNG
    render_source: str = "input"            # "input" | "watertight"

    def __post_init__(self):
        if self.surface_uniform is None:
            self.surface_uniform = self.surface_total // 2
        if self.surface_sharp is None:
            self.surface_sharp = self.surface_total - self.surface_uniform
        if self.fps_uniform is None:
            self.fps_uniform = self.fps_budget // 2
        if self.fps_sharp is None:
            self.fps_sharp = self.fps_budget - self.fps_uniform
        self.validate()

    def validate(self) -> None:
        counts = (self.grid_resolution, self.n_near, self.n_uniform,
                  self.surface_uniform, self.surface_sharp, self.camera_count,
                  self.render_width, self.render_height,
                  self.fps_uniform, self.fps_sharp)
        if any(int(c) < 1 for c in counts):
            raise ValueError("all pipeline counts must be >= 1")
        if self.grid_resolution < 2:
            raise ValueError("grid resolution must be >= 2")
        if self.surface_uniform + self.surface_sharp != self.surface_total:
            raise ValueError("surface split does not sum to surface_total")
        if self.fps_uniform + self.fps_sharp != self.fps_budget:
            raise ValueError("fps split does not sum to fps_budget")
        if self.fps_uniform > self.surface_uniform or self.fps_sharp > self.surface_sharp:
            raise ValueError("fps budget exceeds available surface samples")
        if self.query_composition not in ("near+uniform", "near+surface"):
            raise ValueError(f"unknown query composition {self.query_composition!r}")
        if self.render_source not in ("input", "watertight"):
            raise ValueError(f"unknown render source {self.render_source!r}")
        if self.degenerate_policy not in ("drop", "error"):
            raise ValueError(f"unknown degenerate policy {self.degenerate_policy!r}")
        if self.canonical_fov is not None and not 0.0 < self.canonical_fov < 180.0:
            raise ValueError("canonical_fov must lie in (0, 180) degrees")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["near_sigmas"] = list(self.near_sigmas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "near_sigmas" in d:
            d["near_sigmas"] = tuple(d["near_sigmas"])
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class DatasetRecord:
    """Manifest contents for one processed asset."""

    asset_id: str
    input_path: str
    input_sha256: str
    status: str
    seed: int
    streams: Dict[str, int]
    config: dict
    normalization: Optional[dict] = None
    load_report: Optional[dict] = None
    watertight_report: Optional[dict] = None
    counts: Dict[str, int] = field(default_factory=dict)
    files: Dict[str, dict] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


class _StageTimer:
    def __init__(self, record: DatasetRecord):
        self.record = record

    def __call__(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()

            def __exit__(self_inner, *exc):
                timer.record.timings[name] = round(time.perf_counter() - self_inner.t0, 6)
                return False

        return _Ctx()


def _register_file(record: DatasetRecord, root: Path, path: Path) -> None:
    rel = path.relative_to(root).as_posix()
    record.files[rel] = {
        "sha256": arrayio.sha256_file(path),
        "bytes": path.stat().st_size,
    }


def process_asset(input_path, out_dir, config: PipelineConfig,
                  asset_id: Optional[str] = None) -> DatasetRecord:
    """Process one mesh into a record directory; atomic via staging+rename."""
    input_path = Path(input_path)
    out_dir = Path(out_dir)
    asset_id = asset_id if asset_id is not None else input_path.name
    seed = derive_seed(config.seed, asset_id)
    record = DatasetRecord(
        asset_id=asset_id,
        input_path=str(input_path),
        input_sha256="",
        status="failed",
        seed=seed,
        streams={
            "surface": STREAM_SURFACE, "sharp": STREAM_SHARP,
            "near": STREAM_NEAR, "volume": STREAM_VOLUME,
            "cameras": STREAM_CAMERAS,
        },
        config=config.to_dict(),
    )
    stage = _StageTimer(record)

    final_dir = out_dir / Path(asset_id).stem
    staging = out_dir / f".staging-{Path(asset_id).stem}"
    if staging.exists():
        shutil.rmtree(staging)
    try:
        record.input_sha256 = arrayio.sha256_file(input_path)
        staging.mkdir(parents=True)
        _run_stages(input_path, staging, config, seed, record, stage)
        record.status = "ok"
        record.error = None
    except Exception as exc:  # noqa: BLE001 - reported in the record
        record.error = f"{type(exc).__name__}: {exc}"
        if staging.exists():
            shutil.rmtree(staging)
        return record

    arrayio.dump_json(staging / MANIFEST_NAME, record.to_dict())
    if final_dir.exists():
        shutil.rmtree(final_dir)
    staging.rename(final_dir)
    return record


def _run_stages(input_path: Path, root: Path, config: PipelineConfig,
                seed: int, record: DatasetRecord, stage) -> None:
    with stage("load"):
        mesh, load_report = read_mesh(input_path, degenerate=config.degenerate_policy)
        record.load_report = load_report.to_dict()

    with stage("normalize"):
        mesh, transform = normalize_mesh(mesh)
        record.normalization = transform.to_dict()

    bounds = Aabb((-config.query_bound,) * 3, (config.query_bound,) * 3)
    with stage("bvh_input"):
        input_bvh = build_bvh(mesh)

    watertight = mesh
    if config.do_watertight:
        with stage("sdf_grid"):
            grid = bake_sdf_grid(input_bvh, config.grid_resolution, bounds)
        if config.save_grid:
            with stage("save_grid"):
                payload, meta = save_sdf_grid(
                    grid, root / "sdf_grid.f32", root / "sdf_grid.json")
                _register_file(record, root, payload)
                _register_file(record, root, meta)
        with stage("marching_cubes"):
            watertight = marching_cubes(grid)
        with stage("watertight_check"):
            report = check_watertight(watertight)
            record.watertight_report = report.to_dict()
            if not report.is_closed:
                raise RuntimeError("watertight stage produced an open mesh")
        with stage("write_watertight"):
            path = root / "watertight.obj"
            write_obj(path, watertight)
            _register_file(record, root, path)
        with stage("bvh_watertight"):
            watertight_bvh = build_bvh(watertight)
    else:
        watertight_bvh = input_bvh
        record.watertight_report = check_watertight(watertight).to_dict()

    if config.do_queries:
        with stage("query_set"):
            qcfg = QuerySetConfig(
                n_near=config.n_near, n_uniform=config.n_uniform,
                sigmas=config.near_sigmas, composition=config.query_composition)
            queries = build_query_set(watertight, watertight_bvh, qcfg, seed)
        with stage("write_queries"):
            sidecar = save_query_set(
                queries, root, "queries",
                rng_streams=[RngStream(seed, STREAM_NEAR), RngStream(seed, STREAM_VOLUME)])
            record.counts["query_points"] = len(queries)
            record.counts.update(
                {f"query_{k.replace('-', '_')}": v for k, v in queries.counts().items()})
            for f in _sidecar_files(sidecar):
                _register_file(record, root, f)

    if config.do_surface:
        with stage("surface_uniform"):
            uniform = sample_surface_uniform(
                watertight, config.surface_uniform, RngStream(seed, STREAM_SURFACE))
        with stage("surface_sharp"):
            sharp = sample_surface_sharp(
                watertight, config.surface_sharp, RngStream(seed, STREAM_SHARP),
                angle_threshold_deg=config.sharp_angle_deg, offset=config.sharp_offset)
        with stage("fps"):
            fps_uniform = farthest_point_sampling(uniform.positions, config.fps_uniform)
            fps_sharp = farthest_point_sampling(sharp.positions, config.fps_sharp)
        with stage("write_surface"):
            s1 = save_surface_samples(uniform, root, "surface_uniform",
                                      rng=RngStream(seed, STREAM_SURFACE))
            s2 = save_surface_samples(sharp, root, "surface_sharp",
                                      rng=RngStream(seed, STREAM_SHARP))
            fps_fields = {
                "uniform": arrayio.write_array(
                    root / "fps_uniform.u32", fps_uniform.astype(np.uint32), "u32"),
                "sharp": arrayio.write_array(
                    root / "fps_sharp.u32", fps_sharp.astype(np.uint32), "u32"),
            }
            arrayio.dump_json(root / "fps.json", {
                "kind": "fps-indices", "budget": config.fps_budget,
                "fields": fps_fields,
            })
            record.counts["surface_uniform"] = len(uniform)
            record.counts["surface_sharp"] = len(sharp)
            record.counts["surface_points"] = len(uniform) + len(sharp)
            record.counts["fps_uniform"] = int(fps_uniform.shape[0])
            record.counts["fps_sharp"] = int(fps_sharp.shape[0])
            for f in (_sidecar_files(s1) + _sidecar_files(s2)
                      + [root / "fps.json", root / "fps_uniform.u32", root / "fps_sharp.u32"]):
                _register_file(record, root, f)

    if config.do_renders:
        with stage("camera_rig"):
            bound_radius = BOUND_RADIUS
            if config.tight_framing:
                bound_radius = float(np.linalg.norm(mesh.vertices, axis=1).max())
            cams = build_condition_rig(
                config.camera_count, seed,
                image_size=(config.render_width, config.render_height),
                bound_radius=bound_radius)
            rig_path = root / "cameras.json"
            save_rig(rig_path, cams, seed=seed, offset=condition_rig_offset(seed))
            _register_file(record, root, rig_path)
            if config.canonical_fov is not None:
                fixed = [
                    CameraSpec(
                        position=cam.position / cam.radius
                        * radius_for_fov(config.canonical_fov, bound_radius),
                        target=cam.target, up=cam.up,
                        fov_deg=config.canonical_fov,
                        width=cam.width, height=cam.height)
                    for cam in cams
                ]
                fixed_path = root / "cameras_canonical.json"
                save_rig(fixed_path, fixed, seed=seed)
                _register_file(record, root, fixed_path)
        with stage("renders"):
            target_bvh = watertight_bvh if config.render_source == "watertight" else input_bvh
            views_dir = root / "views"
            for i, cam in enumerate(cams):
                buffers = render(target_bvh, cam)
                images = write_images(buffers, views_dir, i, camera=cam,
                                      preview=config.render_preview)
                for path in images.values():
                    _register_file(record, root, path)
            record.counts["views"] = len(cams)


def _sidecar_files(sidecar_path: Path) -> List[Path]:
    meta = arrayio.load_json(sidecar_path)
    root = sidecar_path.parent
    return [sidecar_path] + [root / f["file"] for f in meta["fields"].values()]


@dataclass
class BatchSummary:
    ok: int
    failed: int
    records: List[dict]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "failed": self.failed, "records": self.records}


def _batch_worker(args) -> DatasetRecord:
    input_path, out_dir, config_dict, asset_id = args
    return process_asset(input_path, out_dir, PipelineConfig.from_dict(config_dict), asset_id)


def read_manifest(manifest_path) -> List[str]:
    lines = [
        ln.strip()
        for ln in Path(manifest_path).read_text().splitlines()
    ]
    assets = [ln for ln in lines if ln and not ln.startswith("#")]
    if not assets:
        raise ValueError(f"manifest {manifest_path} lists no assets")
    return assets


def run_batch(manifest_path, out_dir, config: PipelineConfig,
              workers: int = 1) -> BatchSummary:
    """Process every asset in a manifest; failures don't stop the batch."""
    manifest_path = Path(manifest_path)
    assets = read_manifest(manifest_path)
    stems = [Path(a).stem for a in assets]
    if len(set(stems)) != len(stems):
        raise ValueError("duplicate asset stems in manifest; record dirs would collide")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def resolve(asset: str) -> Path:
        p = Path(asset)
        return p if p.is_absolute() else (manifest_path.parent / p)

    jobs = [(resolve(a), out_dir, config.to_dict(), a) for a in assets]
    if workers <= 1:
        records = [_batch_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_batch_worker, jobs))

    ok = sum(1 for r in records if r.status == "ok")
    summary = BatchSummary(ok, len(records) - ok, [r.to_dict() for r in records])
    arrayio.dump_json(out_dir / "batch_summary.json", summary.to_dict())
    return summary


@dataclass
class ValidationResult:
    ok: bool
    issues: List[str]
    watertight_report: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"ok": self.ok, "issues": self.issues,
                "watertight_report": self.watertight_report}


def validate_record(record_dir) -> ValidationResult:
    """Re-hash artifacts, re-check watertightness, re-verify counts."""
    record_dir = Path(record_dir)
    issues: List[str] = []
    manifest_path = record_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        return ValidationResult(False, [f"missing {MANIFEST_NAME}"])
    manifest = arrayio.load_json(manifest_path)

    for rel, meta in manifest.get("files", {}).items():
        path = record_dir / rel
        if not path.is_file():
            issues.append(f"missing file: {rel}")
            continue
        digest = arrayio.sha256_file(path)
        if digest != meta["sha256"]:
            issues.append(f"hash mismatch: {rel} (expected {meta['sha256'][:12]}, "
                          f"got {digest[:12]})")

    report_dict = None
    wt_path = record_dir / "watertight.obj"
    if wt_path.is_file():
        from .mesh import MeshError
        from .meshio import load_mesh

        try:
            report = check_watertight(load_mesh(wt_path))
        except MeshError as exc:
            issues.append(f"stored watertight mesh unreadable: {exc}")
        else:
            report_dict = report.to_dict()
            if not report.is_closed:
                issues.append("stored watertight mesh is not closed")

    cfg = manifest.get("config", {})
    counts = manifest.get("counts", {})
    expected = {}
    if cfg.get("do_queries"):
        expected["query_points"] = cfg["n_near"] + cfg["n_uniform"]
    if cfg.get("do_surface"):
        expected["surface_points"] = cfg["surface_uniform"] + cfg["surface_sharp"]
        expected["fps_uniform"] = cfg["fps_uniform"]
        expected["fps_sharp"] = cfg["fps_sharp"]
    if cfg.get("do_renders"):
        expected["views"] = cfg["camera_count"]
    for key, want in expected.items():
        got = counts.get(key)
        if got != want:
            issues.append(f"count mismatch: {key} expected {want}, got {got}")

    return ValidationResult(not issues, issues, report_dict)
