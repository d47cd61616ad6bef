"""Command-line interface: ``bgaug <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data or format error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import imaging
from .augment import Mode, SamplingRanges, center_crop
from .background import load_pool
from .dataset import (
    EpochPlan, GenerationContext, SampleJob, build_epoch, generate, load_frame, load_manifest,
    split_train_val, validation_epoch, write_dataset,
)
from .errors import ConfigError, DataError
from .mask import DEFAULT_SOFTEN_SIGMA, encode_mask, load_detections, prepare_mask
from .metrics import evaluate
from .pose import read_frame_times, read_track_csv, resample_and_label, write_labels_csv
from .rng import parse_seed

logger = logging.getLogger("bgaug")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_IO = 0, 2, 3, 4
POOL_ENV = "BGAUG_POOL"


def load_config(path) -> SamplingRanges:
    """Read photometric range overrides from a TOML or JSON file.

    Keys may sit at top level or under a ``[ranges]`` table.
    """
    if path is None:
        return SamplingRanges()
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            doc = tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a table of sampling ranges")
    return SamplingRanges.from_mapping(doc.get("ranges", doc))


def _seed(text: str) -> int:
    try:
        return parse_seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pool_dir(args) -> str:
    pool = args.pool or os.environ.get(POOL_ENV)
    if not pool:
        raise ConfigError(f"no background pool given (use --pool or set {POOL_ENV})")
    return pool


def _open_pool(args, manifest):
    w, h = manifest.frame_size
    return load_pool(_pool_dir(args), w, h)


# --- commands ----------------------------------------------------------------

def cmd_mask_prep(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out).resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    sigma = 0.0 if args.no_smooth else args.sigma
    w, h = manifest.frame_size
    prepared = no_person = skipped = 0
    for entry in manifest.entries:
        if not entry.detections:
            skipped += 1
            continue
        detections = load_detections(manifest.resolve(entry.detections), w, h)
        chosen, alpha = prepare_mask(detections, w, h, sigma, entry.override_person_index)
        if chosen is None:
            logger.warning("%s: no person detected; entry left without mask", entry.frame)
            entry.mask = None
            no_person += 1
            continue
        mask_path = out_dir / f"{entry.frame_id}.png"
        imaging.write_gray(mask_path, encode_mask(alpha))
        audit = {
            "frame": entry.frame,
            "selected": chosen.to_json(),
            "detections": len(detections),
            "sigma": sigma,
            "override_person_index": entry.override_person_index,
        }
        (out_dir / f"{entry.frame_id}.json").write_text(json.dumps(audit, indent=1) + "\n", encoding="utf-8")
        entry.mask = Path(os.path.relpath(mask_path, manifest.frame_dir)).as_posix()
        prepared += 1
    out_manifest = Path(args.out_manifest) if args.out_manifest else out_dir / "manifest.json"
    manifest.save(out_manifest)
    summary = {"prepared": prepared, "no_person": no_person, "without_detections": skipped,
               "manifest": str(out_manifest)}
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_pool_stats(args) -> int:
    pool = load_pool(_pool_dir(args), args.width, args.height)
    print(json.dumps(pool.stats(), indent=1))
    return EXIT_OK


def _context(args, manifest, mode) -> GenerationContext:
    pool = _open_pool(args, manifest) if mode is Mode.BGAUG else None
    return GenerationContext(manifest, args.seed, mode, load_config(args.config), pool)


def cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    mode = Mode.parse(args.mode)
    plan = EpochPlan(args.seed, args.epochs, args.steps, args.batch, mode, args.split)
    train, val = split_train_val(len(manifest.entries), plan.split_fraction, plan.seed)
    if args.subset == "train":
        jobs = [job for e in range(plan.epochs) for job in build_epoch(plan, train, e)]
    else:
        if not val:
            raise DataError("validation split is empty")
        jobs = [job for e in range(plan.epochs) for job in validation_epoch(val, e)]
    ctx = _context(args, manifest, mode)
    ctx.load(job.source for job in jobs)
    w, h = manifest.frame_size
    extra = {
        "seed": plan.seed,
        "seed_hex": f"0x{plan.seed:016x}",
        "plan": plan.to_json(),
        "subset": args.subset,
        "train_count": len(train),
        "val_count": len(val),
        "ranges": ctx.ranges.to_json(),
    }
    summary = write_dataset(generate(ctx, jobs, args.workers), args.out, args.format,
                            manifest, w, ctx.crop_height, extra)
    print(json.dumps({k: summary[k] for k in ("format", "count", "sha256")}, indent=1))
    return EXIT_OK


def render_preview(ctx: GenerationContext, source: int, n: int) -> np.ndarray:
    """Original centre crop followed by ``n`` augmented variants, left to right."""
    tiles = [center_crop(ctx.frames[source], ctx.crop_height)]
    for i in range(n):
        params = ctx.params_for(SampleJob(0, i, source))
        tiles.append(ctx.render(source, params))
    return np.concatenate(tiles, axis=1)


def cmd_preview(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    manifest = load_manifest(args.manifest)
    if not 0 <= args.index < len(manifest.entries):
        raise ConfigError(f"--index {args.index} outside manifest of {len(manifest.entries)} entries")
    ctx = _context(args, manifest, Mode.parse(args.mode))
    ctx.load([args.index])
    grid = render_preview(ctx, args.index, args.n)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    imaging.write_gray(args.out, grid)
    print(json.dumps({"out": str(args.out), "width": grid.shape[1], "height": grid.shape[0]}))
    return EXIT_OK


def cmd_pose_derive(args) -> int:
    frames = read_frame_times(args.frames)
    result = resample_and_label(frames, read_track_csv(args.drone), read_track_csv(args.subject),
                                args.max_gap)
    write_labels_csv(args.out, result.labels)
    print(json.dumps({"labelled": len(result.labels), "dropped": result.dropped}))
    return EXIT_OK


def cmd_eval_r2(args) -> int:
    report = evaluate(args.labels, args.predictions, phi_linear=args.phi_linear)
    text = json.dumps(report.to_json(), indent=1)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_center_crop(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = []
    for entry in manifest.entries:
        crop = center_crop(load_frame(manifest, entry))
        imaging.write_gray(out_dir / f"{entry.frame_id}.png", crop)
        labels.append((entry.frame_id, entry.label))
    write_labels_csv(out_dir / "labels.csv", labels)
    print(json.dumps({"count": len(labels)}))
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgaug", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--manifest", required=True, help="dataset manifest JSON")
    gen.add_argument("--pool", help=f"background image directory (default ${POOL_ENV})")
    gen.add_argument("--seed", type=_seed, required=True, help="64-bit seed, decimal or 0x-hex")
    gen.add_argument("--mode", choices=["aug", "bgaug"], default="bgaug")
    gen.add_argument("--config", help="TOML/JSON file overriding photometric sampling ranges")

    p = sub.add_parser("mask-prep", help="select subjects and write softened alpha masks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for masks and audit records")
    p.add_argument("--out-manifest", help="updated manifest path (default OUT/manifest.json)")
    p.add_argument("--sigma", type=float, default=DEFAULT_SOFTEN_SIGMA, help="softening sigma in px")
    p.add_argument("--no-smooth", action="store_true", help="keep hard binary masks")
    p.set_defaults(func=cmd_mask_prep)

    p = sub.add_parser("pool-stats", help="index a background pool and report its size")
    p.add_argument("--pool")
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=160)
    p.set_defaults(func=cmd_pool_stats)

    p = sub.add_parser("augment", parents=[gen], help="generate augmented training epochs")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--steps", type=int, default=320)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--split", type=float, default=0.2, help="validation fraction")
    p.add_argument("--subset", choices=["train", "val"], default="train")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=["png", "packed"], default="packed")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("preview", parents=[gen], help="write a grid of augmentations of one frame")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--index", type=int, default=0, help="manifest entry to preview")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("pose-derive", help="relative pose labels from mocap tracks")
    p.add_argument("--frames", required=True, help="CSV with frame_id,timestamp_s")
    p.add_argument("--drone", required=True, help="drone track CSV")
    p.add_argument("--subject", required=True, help="subject track CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--max-gap", type=float, default=0.050, help="seconds")
    p.set_defaults(func=cmd_pose_derive)

    p = sub.add_parser("eval-r2", help="R² of predictions against labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--phi-linear", action="store_true", help="plain R² for phi, no wrapping")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval_r2)

    p = sub.add_parser("center-crop", help="middle-rows evaluation crops of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_center_crop)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
