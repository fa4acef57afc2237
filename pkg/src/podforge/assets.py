"""Background and cut-out pod pools.

Pods are RGBA cut-outs whose alpha channel is the object mask; backgrounds
are RGB backdrops of exactly the canvas size. Both pools are loaded in
lexicographic filename order so that seeded selection is reproducible.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from podforge.errors import InvalidAsset, IoError, PoolEmpty

ALPHA_THRESHOLD = 128
IMAGE_SUFFIXES = (".png",)
SIDECAR = "pool.json"


def tight_bbox(alpha):
    """Return ``(x, y, w, h)`` bounding the nonzero entries of ``alpha``, or None."""
    rows = np.flatnonzero(alpha.any(axis=1))
    cols = np.flatnonzero(alpha.any(axis=0))
    if rows.size == 0:
        return None
    x, y = int(cols[0]), int(rows[0])
    return (x, y, int(cols[-1]) - x + 1, int(rows[-1]) - y + 1)


@dataclass(frozen=True, eq=False)
class PodAsset:
    """A cut-out object. ``pixels`` is an ``(H, W, 4)`` uint8 RGBA array."""

    id: str
    pixels: np.ndarray
    tight_bbox: tuple
    cultivar: Optional[str] = None

    @property
    def anchor(self):
        x, y, w, h = self.tight_bbox
        return (x + w / 2.0, y + h / 2.0)

    @property
    def alpha(self):
        return self.pixels[..., 3]

    @property
    def mask(self):
        return self.pixels[..., 3] > 0

    def __eq__(self, other):
        if not isinstance(other, PodAsset):
            return NotImplemented
        return (
            self.id == other.id
            and self.cultivar == other.cultivar
            and self.tight_bbox == other.tight_bbox
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True, eq=False)
class BackgroundAsset:
    id: str
    pixels: np.ndarray

    @property
    def size(self):
        h, w = self.pixels.shape[:2]
        return (w, h)

    def __eq__(self, other):
        if not isinstance(other, BackgroundAsset):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.pixels, other.pixels)


def _check_pool(assets, kind):
    if not assets:
        raise PoolEmpty(f"{kind} pool is empty")
    ids = [a.id for a in assets]
    if len(set(ids)) != len(ids):
        raise InvalidAsset(next(i for i in ids if ids.count(i) > 1), "duplicate id")


@dataclass(frozen=True)
class PodPool:
    assets: tuple

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        _check_pool(self.assets, "pod")

    def __len__(self):
        return len(self.assets)

    def __getitem__(self, i):
        return self.assets[i]

    def __iter__(self):
        return iter(self.assets)


@dataclass(frozen=True)
class BackgroundPool:
    assets: tuple

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        _check_pool(self.assets, "background")

    def __len__(self):
        return len(self.assets)

    def __getitem__(self, i):
        return self.assets[i]

    def __iter__(self):
        return iter(self.assets)


def make_pod_asset(asset_id, rgba, cultivar=None):
    """Validate an RGBA array, binarize its alpha and zero-pad it.

    Alpha values at or above 128 become fully opaque, everything else fully
    transparent, so soft matting edges produce crisp instance masks.
    """
    rgba = np.asarray(rgba)
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise InvalidAsset(asset_id, "expected an RGBA image")
    opaque = rgba[..., 3] >= ALPHA_THRESHOLD
    bbox = tight_bbox(opaque)
    if bbox is None:
        raise InvalidAsset(asset_id, "alpha channel has no object pixels")
    pixels = rgba.astype(np.uint8, copy=True)
    pixels[..., 3] = np.where(opaque, 255, 0)
    pixels[~opaque, :3] = 0
    return zero_pad(PodAsset(asset_id, pixels, bbox, cultivar))


def zero_pad(asset):
    """Centre the object on a transparent square that survives any rotation.

    The side is ``ceil(hypot(w, h)) + 2`` for a ``w x h`` tight box: the
    circumscribed circle of the object fits inside, with a one-pixel guard
    on each side to absorb the half-pixel centring offset.
    """
    x, y, w, h = asset.tight_bbox
    side = math.ceil(math.hypot(w, h)) + 2
    ox, oy = (side - w) // 2, (side - h) // 2
    out = np.zeros((side, side, 4), dtype=np.uint8)
    crop = asset.pixels[y : y + h, x : x + w]
    keep = crop[..., 3] > 0
    out[oy : oy + h, ox : ox + w][keep] = crop[keep]
    return PodAsset(asset.id, out, (ox, oy, w, h), asset.cultivar)


def _list_images(dir_path):
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise PoolEmpty(f"pool directory {dir_path} does not exist")
    files = sorted(
        p for p in dir_path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise PoolEmpty(f"no images in {dir_path}")
    return files


def _read_image(path):
    try:
        with Image.open(path) as im:
            im.load()
            return im.copy()
    except (OSError, UnidentifiedImageError) as exc:
        raise IoError(path, str(exc)) from exc


def _read_sidecar(dir_path):
    sidecar = Path(dir_path) / SIDECAR
    if not sidecar.exists():
        return {}
    try:
        return json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(sidecar, str(exc)) from exc


def load_pod_pool(dir_path):
    """Load every PNG cut-out under ``dir_path`` into a :class:`PodPool`.

    Asset ids are file stems. An optional ``pool.json`` maps file names to
    cultivar labels.
    """
    files = _list_images(dir_path)
    cultivars = _read_sidecar(dir_path)
    assets = []
    for path in files:
        im = _read_image(path)
        bands = im.getbands()
        if "A" not in bands and not (im.mode == "P" and "transparency" in im.info):
            raise InvalidAsset(path.stem, "image has no alpha channel")
        rgba = np.asarray(im.convert("RGBA"))
        assets.append(make_pod_asset(path.stem, rgba, cultivars.get(path.name)))
    return PodPool(assets)


def load_background_pool(dir_path, canvas=(1024, 1024)):
    """Load RGB backdrops; each must be exactly ``canvas = (w, h)`` pixels."""
    files = _list_images(dir_path)
    assets = []
    for path in files:
        im = _read_image(path)
        if im.size != tuple(canvas):
            raise InvalidAsset(path.stem, f"size {im.size} != canvas {tuple(canvas)}")
        assets.append(BackgroundAsset(path.stem, np.asarray(im.convert("RGB")).copy()))
    return BackgroundPool(assets)
