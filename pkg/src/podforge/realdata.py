"""Import hand-annotated real images given as per-object binary masks.

Layout expected under the two input directories::

    images/<stem>.png|.jpg|.jpeg      one photograph per plant
    masks/<stem>/<anything>.png       one binary mask per pod (nonzero = pod)

Masks are matched to images by stem and read in filename order. Each image
is downscaled (long side ``long_side``, never upscaled) before it is
written, and its masks follow it exactly.
"""

from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from podforge import augment
from podforge.annotations import (
    MANIFEST,
    SPLITS,
    DatasetManifest,
    _dump_json,
    _save_png,
    annotation_from_mask,
    coco_document,
)
from podforge.errors import InsufficientScenes, InvalidArgument, IoError, PoolEmpty

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _open(path, mode):
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert(mode))
    except OSError as exc:
        raise IoError(path, str(exc)) from exc


def import_binary_masks(image_dir, mask_dir, out_dir, split_plan, long_side=1024, created_at=None):
    image_dir, mask_dir, out = Path(image_dir), Path(mask_dir), Path(out_dir)
    if not image_dir.is_dir():
        raise PoolEmpty(f"image directory {image_dir} does not exist")
    files = sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise PoolEmpty(f"no images in {image_dir}")
    plan = {name: int(split_plan.get(name, 0)) for name in SPLITS}
    needed = sum(plan.values())
    if needed > len(files):
        raise InsufficientScenes(f"split plan needs {needed} images, found {len(files)}")
    (out / "images").mkdir(parents=True, exist_ok=True)

    images = {s: [] for s in SPLITS}
    anns = {s: [] for s in SPLITS}
    entries = []
    order = [s for s in SPLITS for _ in range(plan[s])]
    for image_id, (path, split) in enumerate(zip(files, order)):
        pixels = _open(path, "RGB")
        h, w = pixels.shape[:2]
        masks = []
        pod_dir = mask_dir / path.stem
        for mp in sorted(pod_dir.glob("*.png")) if pod_dir.is_dir() else []:
            m = _open(mp, "L") > 0
            if m.shape != (h, w):
                raise InvalidArgument(f"{mp}: mask is {m.shape[1]}x{m.shape[0]}, image is {w}x{h}")
            if m.any():
                masks.append(m)
        records = [annotation_from_mask(m, 0, image_id) for m in masks]
        target = min(long_side, max(h, w))
        pixels, records = augment.resize(pixels, records, target)
        first = len(anns[split]) + 1
        for k, r in enumerate(records):
            r.annotation_id = first + k
        anns[split].extend(records)
        name = f"images/{image_id:06d}.png"
        _save_png(pixels, out / name)
        rec = {"id": image_id, "file_name": name, "width": int(pixels.shape[1]), "height": int(pixels.shape[0])}
        images[split].append(rec)
        entries.append({**rec, "source": path.name, "split": split})

    files_out = {}
    for split in SPLITS:
        files_out[split] = f"annotations_{split}.json"
        _dump_json(coco_document(images[split], anns[split]), out / files_out[split])
    manifest = DatasetManifest(
        splits={s: [r["id"] for r in images[s]] for s in SPLITS},
        images=entries,
        split_plan=plan,
        annotation_files=files_out,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    manifest.validate()
    _dump_json(manifest.to_dict(), out / MANIFEST)
    return manifest
