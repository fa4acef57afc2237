"""``podforge`` command line.

Exit codes: 0 success, 1 runtime error (a JSON object with ``error`` and
``message`` is printed on stderr), 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from podforge import annotations as ann_io
from podforge.assets import load_background_pool, load_pod_pool
from podforge.errors import InvalidArgument, IoError, PodforgeError
from podforge.evaluator import Detection, evaluate, format_report_table
from podforge.generator import GenerationConfig, generate_scenes, mask_color, overlay
from podforge.plan import build_transfer_plan
from podforge.rle import decode

SEED_ENV = "PODFORGE_SEED"
CONFIG_FLAGS = {
    "overlap": "overlap_coefficient",
    "seed": "master_seed",
    "max_attempts": "max_attempts",
    "max_consecutive_rejections": "max_consecutive_rejections",
    "min_visible": "min_visible_fraction",
    "canvas": "canvas",
    "scale_range": "scale_range",
    "rotation_range": "rotation_range",
}


def default_split(count):
    """Validation is one tenth of training: 220 -> 200/20/0."""
    train = count * 10 // 11
    return {"train": train, "val": count - train, "test": 0}


def resolve_generate_args(args, environ=os.environ):
    """Merge config file, ``PODFORGE_SEED`` and flags (in rising priority)."""
    doc = ann_io.load_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise InvalidArgument("config file must hold a JSON object")
    doc = dict(doc)
    split = doc.pop("split", None)
    count = doc.pop("count", None)
    if environ.get(SEED_ENV):
        try:
            doc["master_seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise InvalidArgument(f"{SEED_ENV} must be an integer") from exc
    for flag, key in CONFIG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            doc[key] = v
    config = GenerationConfig.from_dict(doc)
    if args.split is not None:
        split = dict(zip(ann_io.SPLITS, args.split))
    if args.count is not None:
        count = args.count
    if split is None:
        if count is None:
            raise InvalidArgument("give --count or --split (or set them in the config)")
        split = default_split(count)
    split = {k: int(split.get(k, 0)) for k in ann_io.SPLITS}
    if count is None:
        count = sum(split.values())
    if count > sum(split.values()):
        raise InvalidArgument(f"count {count} exceeds the split total {sum(split.values())}")
    return config, split, count


def cmd_generate(args):
    config, split, count = resolve_generate_args(args)
    if args.pools:
        pods_dir = Path(args.pools) / "pods"
        bg_dir = Path(args.pools) / "backgrounds"
    else:
        pods_dir, bg_dir = args.pods, args.backgrounds
    if pods_dir is None or bg_dir is None:
        raise InvalidArgument("give --pools DIR or both --pods and --backgrounds")
    pods = load_pod_pool(pods_dir)
    backgrounds = load_background_pool(bg_dir, config.canvas)
    scenes = generate_scenes(config, pods, backgrounds, range(count), threads=args.threads)
    ann_io.write_dataset(scenes, split, args.out, config=config)
    row = ann_io.dataset_dir_stats(args.out)
    print(
        f"c={config.overlap_coefficient:g} scenes={count} "
        f"train={split['train']} val={split['val']} test={split['test']} "
        f"mean_instances={row['pod_count']:.1f} "
        f"mean_seconds={row['seconds_per_image'] or 0:.3f}"
    )
    return 0


def cmd_stats(args):
    rows = []
    for d in args.datasets:
        if not Path(d).is_dir():
            raise IoError(d, "dataset directory not found")
        rows.append(ann_io.dataset_dir_stats(d))
    rows.sort(key=lambda r: (r["overlap_coefficient"] is None, r["overlap_coefficient"] or 0))
    print(ann_io.format_stats_table(rows))
    print(json.dumps({"rows": rows}, indent=2))
    if args.json:
        Path(args.json).write_text(json.dumps({"rows": rows}, indent=2) + "\n", encoding="utf-8")
    return 0


def load_predictions(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(path, str(exc)) from exc
    if not text.strip():
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(doc, dict) and "annotations" in doc:
        doc = doc["annotations"]
    if not isinstance(doc, list):
        raise InvalidArgument(f"{path}: expected an array of detections")
    return [Detection.from_dict(d) for d in doc]


def cmd_evaluate(args):
    _, gts = ann_io.read_annotations(args.gt)
    dets = load_predictions(args.pred)
    report = evaluate(gts, dets, mode=args.mode)
    print(format_report_table([report]))
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_plan(args):
    plan = build_transfer_plan(args.synthetic, args.real)
    try:
        Path(args.out).write_text(json.dumps(plan, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(args.out, str(exc)) from exc
    print(f"wrote 2-step plan to {args.out}, pixel_mean={plan['steps'][0]['pixel_mean']}")
    return 0


def _pick_image(images, image_path, image_id):
    if image_id is not None:
        return image_id
    name = Path(image_path).name
    for img in images:
        if Path(img.get("file_name", "")).name == name:
            return img["id"]
    if len(images) == 1:
        return images[0]["id"]
    raise InvalidArgument(f"cannot tell which image {name} is; pass --image-id")


def cmd_render_overlay(args):
    images, anns = ann_io.read_annotations(args.annotations)
    try:
        with Image.open(args.image) as im:
            pixels = np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise IoError(args.image, str(exc)) from exc
    image_id = _pick_image(images, args.image, args.image_id) if anns else None
    mine = [a for a in anns if a.image_id == image_id]
    masks = []
    for a in mine:
        m = decode(a.segmentation)
        if m.shape != pixels.shape[:2]:
            raise InvalidArgument(f"annotation {a.annotation_id} does not match the image size")
        masks.append(m)
    colors = [mask_color(k) for k in range(len(mine))]
    out = overlay(pixels, masks, [a.bbox for a in mine], colors, draw_boxes=not args.no_boxes)
    try:
        Image.fromarray(out).save(args.out)
    except OSError as exc:
        raise IoError(args.out, str(exc)) from exc
    return 0


def cmd_demo_pools(args):
    from podforge.synthetic import write_demo_pools

    pods, bgs = write_demo_pools(args.out, tuple(args.canvas), args.backgrounds, args.seed)
    print(f"wrote {pods} and {bgs}")
    return 0


def cmd_import_real(args):
    from podforge.realdata import import_binary_masks

    split = dict(zip(ann_io.SPLITS, args.split))
    m = import_binary_masks(args.images, args.masks, args.out, split, long_side=args.long_side)
    print(f"imported {len(m.images)} images into {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="podforge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset of overlapping-pod scenes")
    g.add_argument("--config", help="JSON generation config (may hold 'split' and 'count')")
    g.add_argument("--pools", help="directory holding pods/ and backgrounds/")
    g.add_argument("--pods")
    g.add_argument("--backgrounds")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int)
    g.add_argument("--split", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--overlap", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--max-attempts", type=int)
    g.add_argument("--max-consecutive-rejections", type=int)
    g.add_argument("--min-visible", type=float)
    g.add_argument("--canvas", type=int, nargs=2, metavar=("W", "H"))
    g.add_argument("--scale-range", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--rotation-range", type=float, nargs=2, metavar=("LO", "HI"))
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="pod count and time per image for datasets")
    s.add_argument("datasets", nargs="+")
    s.add_argument("--json", help="also write the table as JSON here")
    s.set_defaults(func=cmd_stats)

    e = sub.add_parser("evaluate", help="AP/recall of predictions against ground truth")
    e.add_argument("gt")
    e.add_argument("pred")
    e.add_argument("--mode", choices=("box", "mask"), default="mask")
    e.add_argument("--json", help="also write the report as JSON here")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("render-overlay", help="tint annotated instances on an image")
    r.add_argument("image")
    r.add_argument("annotations")
    r.add_argument("-o", "--out", required=True)
    r.add_argument("--image-id", type=int)
    r.add_argument("--no-boxes", action="store_true")
    r.set_defaults(func=cmd_render_overlay)

    pl = sub.add_parser("plan", help="emit the two-step fine-tuning plan")
    pl.add_argument("--synthetic", required=True, help="synthetic dataset manifest")
    pl.add_argument("--real", required=True, help="real dataset manifest")
    pl.add_argument("-o", "--out", required=True)
    pl.set_defaults(func=cmd_plan)

    d = sub.add_parser("demo-pools", help="write the procedurally drawn demo pools")
    d.add_argument("out")
    d.add_argument("--canvas", type=int, nargs=2, default=(1024, 1024), metavar=("W", "H"))
    d.add_argument("--backgrounds", type=int, default=4)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_demo_pools)

    i = sub.add_parser("import-real", help="import real images with per-pod binary masks")
    i.add_argument("--images", required=True)
    i.add_argument("--masks", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--split", type=int, nargs=3, required=True, metavar=("TRAIN", "VAL", "TEST"))
    i.add_argument("--long-side", type=int, default=1024)
    i.set_defaults(func=cmd_import_real)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PodforgeError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IoError", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
