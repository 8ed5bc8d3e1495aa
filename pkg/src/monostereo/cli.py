"""Command-line entry point wiring synthesis, curation, training,
generation, the baseline, and evaluation.

Configuration precedence: command-line flags > MONOSTEREO_* environment
variables > key=value config file > built-in defaults. Exit codes:
0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch

ENV_PREFIX = "MONOSTEREO_"

DEFAULTS = {
    "threads": 1,
    "res": 64,
    "frames": 1,
    "specular_prob": 0.5,
    "seed": 0,
    "steps": 20000,
    "batch_size": 16,
    "learning_rate": 1e-4,
    "base_res": 32,
    "crop_size": 32,
    "base_steps": 50,
    "refine_steps": 48,
    "t_start": 0.9,
    "threshold": 60.0,
    "fov_deg": 75.0,
    "size": 512,
    "beta": 10.0,
    "open_radius": 1,
    "dilate_radius": 2,
}


def _read_config_file(path) -> dict:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key=value): {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def resolve_option(name, cli_value, file_values, cast=None):
    """flags > env > config file > defaults."""
    if cli_value is not None:
        return cli_value
    env = os.environ.get(ENV_PREFIX + name.upper())
    raw = env if env is not None else file_values.get(name)
    if raw is None:
        return DEFAULTS.get(name)
    return cast(raw) if cast else raw


def _provenance(out_dir, command, options, checkpoints=None):
    from .checkpoint import file_checksum
    def scrub(v):
        # keep provenance machine-independent: paths reduce to basenames
        if isinstance(v, str) and "/" in v:
            return Path(v).name
        if isinstance(v, dict):
            return {k: scrub(x) for k, x in v.items()}
        return v

    options = {k: scrub(v) for k, v in options.items()
               if k != "func" and not callable(v)}
    record = {"command": command, "options": options}
    if checkpoints:
        record["checkpoints"] = {name: file_checksum(p)
                                 for name, p in checkpoints.items()}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "provenance.json").write_text(
        json.dumps(record, indent=2, sort_keys=True))


def _scene_params(args, file_values):
    from .scenes import SceneParams
    return SceneParams(
        resolution=int(resolve_option("res", args.res, file_values, int)),
        frame_count=int(resolve_option("frames", args.frames, file_values, int)),
        reflection_prob=float(resolve_option("specular_prob", args.specular_prob,
                                             file_values, float)),
        n_shapes_range=(1, 1),
    )


def cmd_synth(args, file_values):
    from .scenes import make_dataset
    params = _scene_params(args, file_values)
    manifest = make_dataset(args.n, params, args.out, master_seed=args.seed)
    print(f"wrote {manifest['n_scenes']} scenes to {args.out}")
    return 0


def cmd_project(args, file_values):
    from . import imgio
    from .projection import PerspectiveIntrinsics, equirect_to_perspective
    fov = float(resolve_option("fov_deg", args.fov, file_values, float))
    size = int(resolve_option("size", args.size, file_values, int))
    intr = PerspectiveIntrinsics(size, size, math.radians(fov),
                                 yaw=args.yaw, pitch=args.pitch)
    video = imgio.load_video_png(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = []
    for k, frame in enumerate(video.frames):
        persp, outside = equirect_to_perspective(frame, intr)
        imgio.save_png(persp, out_dir / f"frame_{k:04d}.png")
        report.append(f"frame {k:04d}: {100 * outside:.3f}% of rays outside hemisphere")
    (out_dir / "coverage.txt").write_text("\n".join(report) + "\n")
    print(f"projected {len(video)} frames to {out_dir}")
    return 0


def cmd_filter(args, file_values):
    from .disparity import max_disparity_filter
    from .scenes import load_bundle, load_manifest
    threshold = float(resolve_option("threshold", args.threshold,
                                     file_values, float))
    root = Path(args.input)
    manifest = load_manifest(root)
    report = []
    for entry in manifest["scenes"]:
        bundle = load_bundle(root / entry["dir"])
        keep, measured = max_disparity_filter(bundle.pair, threshold)
        report.append({"dir": entry["dir"], "seed": entry["seed"],
                       "keep": keep, "measured_disparity": measured})
    out = root / "filter_report.json"
    out.write_text(json.dumps({"threshold": threshold, "scenes": report},
                              indent=2, sort_keys=True))
    kept = sum(r["keep"] for r in report)
    print(f"kept {kept}/{len(report)} scenes at threshold {threshold}; "
          f"report: {out}")
    return 0


def _train_config(args, file_values):
    from .training import TrainConfig
    return TrainConfig(
        seed=int(resolve_option("seed", args.seed, file_values, int)),
        steps=int(resolve_option("steps", args.steps, file_values, int)),
        batch_size=int(resolve_option("batch_size", args.batch_size,
                                      file_values, int)),
        learning_rate=float(resolve_option("learning_rate", args.learning_rate,
                                           file_values, float)),
    )


def cmd_train(args, file_values):
    from . import baseline, pipeline
    from .checkpoint import save_model
    from .scenes import load_dataset
    bundles = load_dataset(args.data)
    config = _train_config(args, file_values)
    base_res = int(resolve_option("base_res", args.base_res, file_values, int))
    progress = 500 if args.verbose else 0
    if args.model == "base":
        model, _ = pipeline.train_base(bundles, config, base_res, progress)
    elif args.model == "refiner":
        crop = int(resolve_option("crop_size", args.crop_size, file_values, int))
        full_res = bundles[0].scene.params.resolution
        model, _ = pipeline.train_refiner(bundles, config, full_res, crop,
                                          progress)
    else:
        model, _ = baseline.train_inpainter(bundles, config, base_res, progress)
    save_model(args.out, model, config.to_json(),
               optimizer=getattr(model, "_last_optimizer", None))
    print(f"saved {args.model} checkpoint to {args.out}")
    return 0


def _load_right_videos(path):
    """Yield (name, Video, bundle-or-None) for a dataset, scene, or PNG dir."""
    from . import imgio
    from .scenes import load_bundle, load_manifest
    path = Path(path)
    if (path / "manifest.json").exists():
        manifest = load_manifest(path)
        for entry in manifest["scenes"]:
            bundle = load_bundle(path / entry["dir"])
            yield entry["dir"], bundle.pair.right, bundle
    elif (path / "meta.json").exists():
        bundle = load_bundle(path)
        yield path.name, bundle.pair.right, bundle
    else:
        yield path.name, imgio.load_video_png(path), None


def _schedule_from_meta(meta):
    from .diffusion import make_schedule
    tc = meta.get("train_config", {})
    return make_schedule(int(tc.get("schedule_T", 1000)),
                         float(tc.get("beta_start", 1e-4)),
                         float(tc.get("beta_end", 0.02)))


def cmd_gen(args, file_values):
    from . import imgio
    from .checkpoint import load_model
    from .pipeline import GenerateOptions, generate_left
    base_model, base_meta = load_model(args.base)
    refiner_model, _ = load_model(args.refiner)
    schedule = _schedule_from_meta(base_meta)
    opts = GenerateOptions(
        base_steps=int(resolve_option("base_steps", args.base_steps,
                                      file_values, int)),
        refine_steps=int(resolve_option("refine_steps", args.refine_steps,
                                        file_values, int)),
        t_start=float(resolve_option("t_start", args.t_start, file_values, float)),
        seed=int(resolve_option("seed", args.seed, file_values, int)),
    )
    out_root = Path(args.out)
    for name, right, _bundle in _load_right_videos(args.right):
        left = generate_left(right, base_model, refiner_model, schedule, opts)
        imgio.save_video_png(left, out_root / name, prefix="left")
    _provenance(out_root, "gen", vars(args) | {"opts": opts.__dict__},
                {"base": args.base, "refiner": args.refiner})
    print(f"generated left views in {out_root}")
    return 0


def cmd_baseline(args, file_values):
    from . import imgio
    from .baseline import (BaselineOptions, baseline_generate,
                           oracle_surface_disparity)
    from .checkpoint import load_model
    from .imgio import load_raw
    inpainter, meta = load_model(args.inpainter)
    schedule = _schedule_from_meta(meta)
    opts = BaselineOptions(
        base_steps=int(resolve_option("base_steps", args.base_steps,
                                      file_values, int)),
        refine_steps=int(resolve_option("refine_steps", args.refine_steps,
                                        file_values, int)),
        t_start=float(resolve_option("t_start", args.t_start, file_values, float)),
        seed=int(resolve_option("seed", args.seed, file_values, int)),
    )
    out_root = Path(args.out)
    for name, right, bundle in _load_right_videos(args.right):
        if args.disparity == "oracle":
            if bundle is None:
                raise FileNotFoundError(
                    "oracle disparity requires scene bundles with meta.json")
            disp = np.stack([oracle_surface_disparity(bundle, k)
                             for k in range(len(right))])
        else:
            disp = load_raw(args.disparity)
        left = baseline_generate(right, disp, inpainter, schedule, opts)
        imgio.save_video_png(left, out_root / name, prefix="left")
    _provenance(out_root, "baseline", vars(args) | {"opts": opts.__dict__},
                {"inpainter": args.inpainter})
    print(f"generated baseline left views in {out_root}")
    return 0


def cmd_eval(args, file_values):
    from . import imgio
    from .metrics import compare_report
    from .scenes import load_bundle, load_manifest
    root = Path(args.gt)
    manifest = load_manifest(root)
    bundles = {}
    names = {}
    for entry in manifest["scenes"]:
        bundle = load_bundle(root / entry["dir"])
        bundles[bundle.seed] = bundle
        names[bundle.seed] = entry["dir"]
    methods = {}
    for spec_item in args.methods.split(","):
        name, _, method_dir = spec_item.partition("=")
        if not method_dir:
            raise ValueError(f"--methods entries must be name=dir, got {spec_item!r}")
        methods[name] = {seed: imgio.load_video_png(Path(method_dir) / names[seed],
                                                    prefix="left")
                         for seed in bundles}
    summary = compare_report(methods, bundles, args.report)
    print(Path(args.report).read_text())
    return 0


def cmd_anaglyph(args, file_values):
    from . import imgio
    from .frames import to_anaglyph
    left = imgio.load_video_png(args.left)
    right = imgio.load_video_png(args.right)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, (lf, rf) in enumerate(zip(left.frames, right.frames)):
        imgio.save_png(to_anaglyph(lf, rf), out_dir / f"anaglyph_{k:04d}.png")
    print(f"wrote {len(left)} anaglyph frames to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="monostereo",
        description="Desk-scale mono-to-stereo synthesis toolkit")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker thread cap; 1 = deterministic mode "
                             f"(env: {ENV_PREFIX}THREADS)")
    parser.add_argument("--dump-config", action="store_true",
                        help="print effective defaults and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic scene dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--specular-prob", dest="specular_prob", type=float)
    p.add_argument("--res", type=int)
    p.add_argument("--frames", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("project", help="equirect PNG sequence to perspective")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fov", type=float, help="horizontal fov, degrees")
    p.add_argument("--size", type=int)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("filter", help="annotate a dataset with the disparity cap")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("model", choices=["base", "refiner", "inpainter"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--base-res", dest="base_res", type=int)
    p.add_argument("--crop-size", dest="crop_size", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen", help="two-stage left-view generation")
    p.add_argument("--right", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--refiner", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-start", dest="t_start", type=float)
    p.add_argument("--base-steps", dest="base_steps", type=int)
    p.add_argument("--refine-steps", dest="refine_steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("baseline", help="warp-and-inpaint left-view generation")
    p.add_argument("--right", required=True)
    p.add_argument("--disparity", required=True,
                   help="'oracle' (scene bundles) or a raw float32 map")
    p.add_argument("--inpainter", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-start", dest="t_start", type=float)
    p.add_argument("--base-steps", dest="base_steps", type=int)
    p.add_argument("--refine-steps", dest="refine_steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="score method outputs against GT bundles")
    p.add_argument("--gt", required=True)
    p.add_argument("--methods", required=True, help="name=dir,name=dir,...")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("anaglyph", help="red-cyan anaglyph PNG sequence")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_anaglyph)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        for key in sorted(DEFAULTS):
            print(f"{key}={DEFAULTS[key]}")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    file_values = {}
    if args.config:
        try:
            file_values = _read_config_file(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    threads = int(resolve_option("threads", args.threads, file_values, int))
    torch.set_num_threads(max(1, threads))
    try:
        return args.func(args, file_values)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
