"""Interchange annotations, dataset files, split manifests and statistics.

Annotation files use the common detection-dataset JSON layout (``images``,
``annotations``, ``categories``) with a single foreground category, ``pod``.
Field names are listed in ``docs/formats.md``.
"""

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from podforge import rle as rle_ops
from podforge.errors import CorruptScene, InsufficientScenes, InvalidArgument, IoError

POD_CATEGORY = {"id": 1, "name": "pod", "supercategory": "pod"}
SPLITS = ("train", "val", "test")
MANIFEST = "manifest.json"
TIMING = "timing.json"
FORMAT_VERSION = 1


@dataclass
class InstanceAnnotation:
    annotation_id: int
    image_id: int
    bbox: tuple
    segmentation: dict
    area: int
    category_id: int = 1
    iscrowd: int = 0

    def to_dict(self):
        return {
            "id": self.annotation_id,
            "image_id": self.image_id,
            "category_id": self.category_id,
            "bbox": [float(v) for v in self.bbox],
            "segmentation": {
                "size": list(self.segmentation["size"]),
                "counts": list(self.segmentation["counts"]),
            },
            "area": int(self.area),
            "iscrowd": self.iscrowd,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            seg = d["segmentation"]
            if not isinstance(seg, dict) or "counts" not in seg or "size" not in seg:
                raise InvalidArgument(f"annotation {d.get('id')} lacks an RLE segmentation")
            return cls(
                annotation_id=int(d["id"]),
                image_id=int(d["image_id"]),
                bbox=tuple(float(v) for v in d["bbox"]),
                segmentation={"size": [int(v) for v in seg["size"]], "counts": [int(v) for v in seg["counts"]]},
                area=int(d["area"]),
                category_id=int(d.get("category_id", 1)),
                iscrowd=int(d.get("iscrowd", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed annotation record: {exc}") from exc


def annotation_from_mask(mask, annotation_id, image_id):
    seg = rle_ops.encode(mask)
    return InstanceAnnotation(
        annotation_id=annotation_id,
        image_id=image_id,
        bbox=tuple(float(v) for v in rle_ops.to_bbox(seg)),
        segmentation=seg,
        area=rle_ops.area(seg),
    )


def scene_to_annotations(scene, image_id, first_id=1):
    colors = [tuple(inst.mask_color) for inst in scene.instances]
    if len(set(colors)) != len(colors):
        raise CorruptScene(f"scene {scene.scene_index} has duplicate mask colours")
    if (0, 0, 0) in colors:
        raise CorruptScene(f"scene {scene.scene_index} uses black as an instance colour")
    out = []
    for k, inst in enumerate(scene.instances):
        seg = inst.visible_pixels
        out.append(InstanceAnnotation(
            annotation_id=first_id + k,
            image_id=image_id,
            bbox=tuple(float(v) for v in inst.visible_bbox),
            segmentation={"size": list(seg["size"]), "counts": list(seg["counts"])},
            area=rle_ops.area(seg),
        ))
    return out


def mask_to_instances(mask_image):
    """Group the nonzero pixels of a colour mask by exact RGB value.

    Returns ``{(r, g, b): rle}``; each RLE is the pixel set of that colour.
    """
    m = np.asarray(mask_image)
    if m.ndim != 3 or m.shape[2] != 3:
        raise InvalidArgument(f"mask image must be HxWx3, got {m.shape}")
    packed = (m[..., 0].astype(np.int32) << 16) | (m[..., 1].astype(np.int32) << 8) | m[..., 2]
    groups = rle_ops.encode_labels(packed)
    return {((v >> 16) & 255, (v >> 8) & 255, v & 255): seg for v, seg in groups.items()}


@dataclass
class DatasetManifest:
    splits: dict
    images: list
    generation_config: Optional[dict] = None
    master_seed: Optional[int] = None
    split_plan: dict = field(default_factory=dict)
    annotation_files: dict = field(default_factory=dict)
    created_at: str = ""

    def validate(self):
        seen = set()
        for name, ids in self.splits.items():
            overlap = seen.intersection(ids)
            if overlap:
                raise InvalidArgument(f"split {name} shares image ids {sorted(overlap)[:5]}")
            seen.update(ids)
        known = {img["id"] for img in self.images}
        missing = seen - known
        if missing:
            raise InvalidArgument(f"splits reference unknown image ids {sorted(missing)[:5]}")

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "created_at": self.created_at,
            "master_seed": self.master_seed,
            "generation_config": self.generation_config,
            "split_plan": self.split_plan,
            "splits": {k: list(v) for k, v in self.splits.items()},
            "annotation_files": self.annotation_files,
            "images": self.images,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            m = cls(
                splits={k: [int(i) for i in v] for k, v in d["splits"].items()},
                images=list(d["images"]),
                generation_config=d.get("generation_config"),
                master_seed=d.get("master_seed"),
                split_plan=dict(d.get("split_plan", {})),
                annotation_files=dict(d.get("annotation_files", {})),
                created_at=d.get("created_at", ""),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise InvalidArgument(f"malformed manifest: {exc}") from exc
        m.validate()
        return m


def _dump_json(obj, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f, separators=(",", ":"))
            f.write("\n")
    except OSError as exc:
        raise IoError(path, str(exc)) from exc


def load_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(path, str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: invalid JSON ({exc})") from exc


def _save_png(array, path):
    try:
        Image.fromarray(array).save(path)
    except OSError as exc:
        raise IoError(path, str(exc)) from exc


def coco_document(images, annotations, description="podforge"):
    return {
        "info": {"description": description, "version": str(FORMAT_VERSION)},
        "images": images,
        "annotations": [a.to_dict() for a in annotations],
        "categories": [dict(POD_CATEGORY)],
    }


def read_annotations(path):
    """Parse an annotation file into ``(images, [InstanceAnnotation, ...])``."""
    doc = load_json(path)
    if not isinstance(doc, dict) or "annotations" not in doc or "images" not in doc:
        raise InvalidArgument(f"{path}: not an annotation document")
    return doc["images"], [InstanceAnnotation.from_dict(a) for a in doc["annotations"]]


def _split_of(k, plan):
    bound = 0
    for name in SPLITS:
        bound += plan.get(name, 0)
        if k < bound:
            return name
    return None


def write_dataset(scenes, split_plan, out_dir, config=None, created_at=None):
    """Write scenes, per-split annotation files and ``manifest.json``.

    Scenes are assigned in order: the first ``train`` go to train, the next
    ``val`` to val, the next ``test`` to test; extra scenes are ignored.
    ``scenes`` may be a lazy iterator so large datasets stream to disk.
    Image ids equal scene indices. ``config`` is recorded in the manifest
    when given, otherwise taken from the first scene.
    """
    plan = {name: int(split_plan.get(name, 0)) for name in SPLITS}
    if any(n < 0 for n in plan.values()):
        raise InvalidArgument(f"split counts must be non-negative: {plan}")
    needed = sum(plan.values())
    if hasattr(scenes, "__len__"):
        if len(scenes) < needed:
            raise InsufficientScenes(f"split plan needs {needed} scenes, got {len(scenes)}")
        scenes = sorted(scenes, key=lambda s: s.scene_index)

    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(out, str(exc)) from exc

    images = {name: [] for name in SPLITS}
    anns = {name: [] for name in SPLITS}
    entries, timing = [], {}
    canvas = None
    config = config.to_dict() if config is not None else None
    seed = config["master_seed"] if config is not None else None
    written = 0
    for scene in scenes:
        if written == needed:
            break
        split = _split_of(written, plan)
        written += 1
        h, w = scene.image.shape[:2]
        if canvas is None:
            canvas = (w, h)
            if config is None:
                config = scene.config_snapshot.to_dict()
                seed = scene.config_snapshot.master_seed
        elif canvas != (w, h):
            raise InvalidArgument(f"scene {scene.scene_index} is {w}x{h}, expected {canvas[0]}x{canvas[1]}")
        image_id = scene.scene_index
        name = f"{scene.scene_index:06d}.png"
        mask_name = f"{scene.scene_index:06d}_mask.png"
        _save_png(scene.image, out / "images" / name)
        _save_png(scene.mask, out / "masks" / mask_name)
        record = {"id": image_id, "file_name": f"images/{name}", "width": w, "height": h}
        images[split].append(record)
        entries.append({**record, "mask_file_name": f"masks/{mask_name}", "split": split})
        first = len(anns[split]) + 1
        anns[split].extend(scene_to_annotations(scene, image_id, first_id=first))
        timing[str(image_id)] = scene.elapsed_s
    if written < needed:
        raise InsufficientScenes(f"split plan needs {needed} scenes, got {written}")

    files = {}
    for split in SPLITS:
        files[split] = f"annotations_{split}.json"
        _dump_json(coco_document(images[split], anns[split]), out / files[split])
    manifest = DatasetManifest(
        splits={s: [img["id"] for img in images[s]] for s in SPLITS},
        images=entries,
        generation_config=config,
        master_seed=seed,
        split_plan=plan,
        annotation_files=files,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    manifest.validate()
    _dump_json(manifest.to_dict(), out / MANIFEST)
    # Wall-clock data is kept out of the manifest so reruns diff cleanly.
    _dump_json({"scene_seconds": timing}, out / TIMING)
    return manifest


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    if not path.exists():
        raise IoError(path, "manifest not found")
    return DatasetManifest.from_dict(load_json(path))


def _pixels(item):
    if isinstance(item, (str, os.PathLike)):
        try:
            with Image.open(item) as im:
                return np.asarray(im.convert("RGB"))
        except OSError as exc:
            raise IoError(item, str(exc)) from exc
    a = np.asarray(item)
    if a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    return a[..., :3]


def dataset_pixel_mean(images):
    """Per-channel mean over all pixels of all images (arrays or paths)."""
    total = np.zeros(3, dtype=np.int64)
    count = 0
    for item in images:
        a = _pixels(item)
        total += a.reshape(-1, 3).sum(axis=0, dtype=np.int64)
        count += a.shape[0] * a.shape[1]
    if count == 0:
        raise InvalidArgument("pixel mean of an empty image set")
    return tuple(float(v) / count for v in total)


def manifest_pixel_mean(manifest_path, splits=SPLITS):
    path = Path(manifest_path)
    root = path if path.is_dir() else path.parent
    manifest = read_manifest(path)
    wanted = set(splits)
    files = [root / e["file_name"] for e in manifest.images if e.get("split") in wanted]
    return dataset_pixel_mean(files)


def stats_row(coefficient, image_size, instance_counts, seconds):
    return {
        "overlap_coefficient": coefficient,
        "image_size": f"{image_size[0]}x{image_size[1]}",
        "images": len(instance_counts),
        "pod_count": float(np.mean(instance_counts)) if instance_counts else 0.0,
        "seconds_per_image": float(np.mean(seconds)) if seconds else None,
    }


def dataset_stats(datasets):
    """One row per ``(coefficient, scenes)`` pair, sorted by coefficient."""
    rows = []
    for coefficient, scenes in datasets:
        scenes = list(scenes)
        if not scenes:
            raise InvalidArgument(f"dataset for coefficient {coefficient} is empty")
        h, w = scenes[0].image.shape[:2]
        rows.append(stats_row(
            coefficient, (w, h),
            [len(s.instances) for s in scenes],
            [s.elapsed_s for s in scenes],
        ))
    return sorted(rows, key=lambda r: r["overlap_coefficient"])


def dataset_dir_stats(dataset_dir):
    """Stats row for a dataset written by :func:`write_dataset`."""
    root = Path(dataset_dir)
    manifest = read_manifest(root)
    counts = {e["id"]: 0 for e in manifest.images}
    for split, fname in manifest.annotation_files.items():
        _, anns = read_annotations(root / fname)
        for a in anns:
            counts[a.image_id] = counts.get(a.image_id, 0) + 1
    seconds = []
    if (root / TIMING).exists():
        seconds = list(load_json(root / TIMING).get("scene_seconds", {}).values())
    cfg = manifest.generation_config or {}
    if manifest.images:
        size = (manifest.images[0]["width"], manifest.images[0]["height"])
    else:
        size = tuple(cfg.get("canvas", (0, 0)))
    return stats_row(cfg.get("overlap_coefficient"), size, list(counts.values()), seconds)


def format_stats_table(rows):
    header = f"{'coefficient':>11}  {'image size':>10}  {'images':>6}  {'pod count':>9}  {'s/image':>8}"
    lines = [header]
    for r in rows:
        sec = "-" if r["seconds_per_image"] is None else f"{r['seconds_per_image']:.3f}"
        coef = "-" if r["overlap_coefficient"] is None else f"{r['overlap_coefficient']:g}"
        lines.append(
            f"{coef:>11}  {r['image_size']:>10}  {r['images']:>6}  {r['pod_count']:>9.1f}  {sec:>8}"
        )
    return "\n".join(lines)
