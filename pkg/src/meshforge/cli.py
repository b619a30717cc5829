"""forge: the pipeline command line.

Subcommands: process (one asset), batch (manifest of assets), cameras
(emit a rig as JSON), validate (re-check a record directory), flow-demo
(train the toy flow-matching model; writes CSV traces plus figures).
Exit codes: 0 success, 1 any asset failed, 2 usage or config errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np


def _apply_thread_cap() -> None:
    cap = os.environ.get("FORGE_THREADS")
    if cap:
        try:
            import numba

            numba.set_num_threads(max(1, int(cap)))
        except (ImportError, ValueError):
            pass


def _load_config(args) -> "PipelineConfig":
    from .pipeline import PipelineConfig

    if getattr(args, "config", None):
        config = PipelineConfig.from_json_file(args.config)
    else:
        config = PipelineConfig()
    if getattr(args, "grid", None):
        config.grid_resolution = args.grid
    if getattr(args, "views", None):
        config.camera_count = args.views
    if getattr(args, "res", None):
        w, _, h = args.res.partition("x")
        config.render_width = int(w)
        config.render_height = int(h or w)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "canonical_fov", None) is not None:
        config.canonical_fov = args.canonical_fov
    config.validate()
    return config


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", type=int, help="SDF grid resolution (default 256)")
    p.add_argument("--views", type=int, help="condition camera count (default 150)")
    p.add_argument("--res", help="render resolution WxH (default 512x512)")
    p.add_argument("--seed", type=int, help="global seed (default 0)")
    p.add_argument("--canonical-fov", type=float, dest="canonical_fov",
                   help="also emit a fixed-FoV rig at this angle (degrees)")
    p.add_argument("--config", help="JSON config file; flags override its values")


def cmd_process(args) -> int:
    from .pipeline import process_asset

    config = _load_config(args)
    record = process_asset(args.input, args.out, config)
    print(json.dumps({"asset": record.asset_id, "status": record.status,
                      "error": record.error, "counts": record.counts}, indent=2))
    return 0 if record.status == "ok" else 1


def cmd_batch(args) -> int:
    from .pipeline import run_batch

    config = _load_config(args)
    summary = run_batch(args.manifest, args.out, config, workers=args.workers)
    print(json.dumps({"ok": summary.ok, "failed": summary.failed}, indent=2))
    return 0 if summary.failed == 0 else 1


def cmd_cameras(args) -> int:
    from .camera import (
        build_condition_rig,
        build_texture_rig,
        condition_rig_offset,
        rig_to_dict,
        sample_reference_view,
    )
    from .rng import RngStream, STREAM_LIGHTS

    if args.rig == "condition":
        cams = build_condition_rig(args.n, args.seed)
        rig = rig_to_dict(cams, seed=args.seed, offset=condition_rig_offset(args.seed))
    elif args.rig == "texture":
        cams = build_texture_rig(args.seed)
        rig = rig_to_dict(cams, seed=args.seed)
    else:
        cam, light = sample_reference_view(RngStream(args.seed, STREAM_LIGHTS))
        rig = rig_to_dict([cam], seed=args.seed, lights=[light])
    text = json.dumps(rig, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    if args.json or not args.out:
        print(text)
    return 0


def cmd_validate(args) -> int:
    from .pipeline import validate_record

    result = validate_record(args.record_dir)
    print(json.dumps(result.to_dict(), indent=2))
    return 0 if result.ok else 1


def cmd_flow_demo(args) -> int:
    from .flowmatch import (
        AffineVelocity,
        TanhMLPVelocity,
        TrainConfig,
        euler_sample,
        gaussian_shift_sampler,
        independent_gaussian_sampler,
        train_toy,
    )
    from .rng import RngStream, STREAM_FLOW

    target = np.array([3.0, 0.0])
    if args.model == "affine":
        model = AffineVelocity(dim=2)
    else:
        model = TanhMLPVelocity(dim=2, hidden=32, seed=args.seed)
    sampler = (independent_gaussian_sampler(target) if args.independent_pairs
               else gaussian_shift_sampler(target))
    config = TrainConfig(lr=args.lr, steps=args.steps, batch=args.batch, seed=args.seed)
    result = train_toy(model, sampler, config)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(result.loss_trace):
            writer.writerow([i, f"{loss:.10g}"])

    gen = RngStream(args.seed + 1, STREAM_FLOW).generator()
    noise = gen.standard_normal((args.samples, 2))
    generated = euler_sample(model, noise, steps=args.euler_steps)
    samples_path = out.with_name(out.stem + "_samples.csv")
    with open(samples_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0_x", "x0_y", "x1_x", "x1_y"])
        for a, b in zip(noise, generated):
            writer.writerow([f"{a[0]:.10g}", f"{a[1]:.10g}",
                             f"{b[0]:.10g}", f"{b[1]:.10g}"])

    figures = []
    if not args.no_figures:
        from .plots import save_loss_curve, save_sample_scatter

        figures.append(str(save_loss_curve(result.loss_trace, out.with_suffix(".png"))))
        figures.append(str(save_sample_scatter(
            noise, generated, target, out.with_name(out.stem + "_samples.png"))))

    print(json.dumps({
        "initial_loss": float(result.loss_trace[0]),
        "final_loss": float(result.loss_trace[-1]),
        "grad_check_error": result.grad_check_error,
        "sample_mean": generated.mean(axis=0).tolist(),
        "trace_csv": str(out),
        "samples_csv": str(samples_path),
        "figures": figures,
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Convert raw meshes into training-ready records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="process a single mesh into a record")
    p.add_argument("--input", required=True, help="input mesh (.obj/.stl/.ply)")
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_process)

    p = sub.add_parser("batch", help="process a manifest of meshes")
    p.add_argument("--manifest", required=True, help="text file, one mesh path per line")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--workers", type=int, default=1)
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("cameras", help="emit a camera rig as JSON")
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rig", choices=("condition", "texture", "reference"),
                   default="condition")
    p.add_argument("--json", action="store_true", help="print JSON to stdout")
    p.add_argument("--out", help="write JSON to a file")
    p.set_defaults(fn=cmd_cameras)

    p = sub.add_parser("validate", help="re-check a processed record directory")
    p.add_argument("record_dir")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("flow-demo", help="train the toy flow-matching model")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=("affine", "mlp"), default="affine")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--euler-steps", type=int, default=50)
    p.add_argument("--independent-pairs", action="store_true",
                   help="draw x0, x1 independently instead of coupled shifts")
    p.add_argument("--out", required=True, help="loss trace CSV path")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_flow_demo)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
