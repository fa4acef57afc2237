"""Scene synthesis: paste randomly transformed pods onto a background.

Each scene is built by rejection sampling. An attempt picks a pod, draws a
rotation, a scale and a centre, and is accepted only when the centre lies
strictly inside the canvas and is at least ``c * (w_i + w_j) / 2`` away from
every pod already pasted, where ``w`` is the width of a pod's placed
bounding box and ``c`` the overlap coefficient. Smaller ``c`` therefore
packs pods more densely. Later pods occlude earlier ones in both the
composite and the instance mask.
"""

import logging
import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import cv2
import numpy as np

from podforge.errors import InvalidArgument
from podforge.rle import decode, encode_labels, to_bbox
from podforge.rng import MASK64, derive_scene_rng

log = logging.getLogger(__name__)

MAX_INSTANCE_ID = (1 << 24) - 1


@dataclass(frozen=True)
class GenerationConfig:
    canvas: tuple = (1024, 1024)
    overlap_coefficient: float = 0.1
    scale_range: tuple = (0.8, 1.2)
    rotation_range: tuple = (0.0, 360.0)
    max_attempts: int = 600
    max_consecutive_rejections: int = 200
    min_visible_fraction: float = 0.25
    master_seed: int = 0

    def __post_init__(self):
        for name in ("canvas", "scale_range", "rotation_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        w, h = self.canvas
        if int(w) != w or int(h) != h or w < 1 or h < 1:
            raise InvalidArgument(f"canvas must be positive integers, got {self.canvas}")
        object.__setattr__(self, "canvas", (int(w), int(h)))
        if not 0 < self.overlap_coefficient <= 1:
            raise InvalidArgument(f"overlap_coefficient must be in (0, 1], got {self.overlap_coefficient}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise InvalidArgument(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        lo, hi = self.rotation_range
        if not 0 <= lo <= hi <= 360:
            raise InvalidArgument(f"rotation_range must lie in [0, 360], got {self.rotation_range}")
        # 0 is allowed: it yields the background-only scene.
        if self.max_attempts < 0:
            raise InvalidArgument(f"max_attempts must be >= 0, got {self.max_attempts}")
        if self.max_consecutive_rejections < 1:
            raise InvalidArgument("max_consecutive_rejections must be >= 1")
        if not 0 <= self.min_visible_fraction <= 1:
            raise InvalidArgument(f"min_visible_fraction must be in [0, 1], got {self.min_visible_fraction}")
        if not 0 <= self.master_seed <= MASK64:
            raise InvalidArgument(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")

    def to_dict(self):
        d = asdict(self)
        for k in ("canvas", "scale_range", "rotation_range"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Placement:
    pod_id: str
    center: tuple
    rotation_deg: float
    scale: float
    z_index: int
    placed_bbox: tuple

    @property
    def width(self):
        return self.placed_bbox[2]


@dataclass(frozen=True)
class SceneInstance:
    instance_id: int
    placement: Placement
    visible_pixels: dict
    visible_bbox: tuple
    amodal_area: int
    mask_color: tuple

    @property
    def visible_area(self):
        return int(sum(self.visible_pixels["counts"][1::2]))


@dataclass(eq=False)
class Scene:
    image: np.ndarray
    mask: np.ndarray
    instances: list
    config_snapshot: GenerationConfig
    scene_index: int
    background_id: str = ""
    placements: list = field(default_factory=list)
    attempts: int = 0
    elapsed_s: float = 0.0


def mask_color(instance_id):
    """Palette colour of an instance: ``id + 1`` packed as 24-bit RGB."""
    if not 0 <= instance_id < MAX_INSTANCE_ID:
        raise InvalidArgument(f"instance_id out of palette range: {instance_id}")
    v = instance_id + 1
    return ((v >> 16) & 255, (v >> 8) & 255, v & 255)


def _labels_to_rgb(labels):
    out = np.empty(labels.shape + (3,), dtype=np.uint8)
    out[..., 0] = (labels >> 16) & 255
    out[..., 1] = (labels >> 8) & 255
    out[..., 2] = labels & 255
    return out


def sample_transform(rng, config):
    """Draw ``(rotation_deg, scale, center)``, in that order, from ``rng``."""
    rotation = float(rng.uniform(*config.rotation_range))
    scale = float(rng.uniform(*config.scale_range))
    w, h = config.canvas
    cx, cy = rng.uniform((0.0, 0.0), (w, h))
    return rotation, scale, (float(cx), float(cy))


def placement_threshold(w_i, w_j, c):
    if w_i <= 0 or w_j <= 0:
        raise InvalidArgument(f"widths must be positive, got {w_i}, {w_j}")
    if not 0 < c <= 1:
        raise InvalidArgument(f"overlap coefficient must be in (0, 1], got {c}")
    return c * (w_i + w_j) / 2


def _inside(center, canvas):
    x, y = center
    w, h = canvas
    return 0 < x < w and 0 < y < h


def _separated(center, width, centers, widths, c):
    if len(widths) == 0:
        return True
    dx = centers[:, 0] - center[0]
    dy = centers[:, 1] - center[1]
    dist = np.sqrt(dx * dx + dy * dy)
    return bool(np.all(dist >= c * (width + widths) / 2))


def accept_placement(candidate, placed, config):
    """True iff ``candidate`` is in-canvas and far enough from all of ``placed``."""
    if not _inside(candidate.center, config.canvas):
        return False
    centers = np.array([p.center for p in placed], dtype=np.float64).reshape(-1, 2)
    widths = np.array([p.width for p in placed], dtype=np.float64)
    return _separated(candidate.center, candidate.width, centers, widths, config.overlap_coefficient)


class _Warp:
    """Affine placement of one pod asset on a canvas-aligned window."""

    def __init__(self, asset, rotation_deg, scale, center):
        side = asset.pixels.shape[0]
        half = math.ceil(side * scale / 2) + 1
        cx, cy = center
        self.x0 = math.floor(cx) - half
        self.y0 = math.floor(cy) - half
        self.size = (2 * half + 2, 2 * half + 2)
        ax, ay = asset.anchor
        theta = math.radians(rotation_deg)
        a, b = scale * math.cos(theta), scale * math.sin(theta)
        # Pixel centres sit at integer coordinates in the warp convention.
        src = np.array([ax - 0.5, ay - 0.5])
        dst = np.array([cx - self.x0 - 0.5, cy - self.y0 - 0.5])
        lin = np.array([[a, b], [-b, a]])
        self.matrix = np.hstack([lin, (dst - lin @ src)[:, None]])
        self.asset = asset

    def mask(self, alpha):
        out = cv2.warpAffine(
            alpha, self.matrix, self.size, flags=cv2.INTER_NEAREST,
            borderMode=cv2.BORDER_CONSTANT, borderValue=0,
        )
        return out > 0

    def rgba(self, rgba_f32):
        return cv2.warpAffine(
            rgba_f32, self.matrix, self.size, flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0, 0),
        )


def _window(x0, y0, shape, canvas):
    # Overlap of a window at (x0, y0) with the canvas, as (canvas, local) slices.
    h, w = shape
    cw, ch = canvas
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + w, cw), min(y0 + h, ch)
    if cx0 >= cx1 or cy0 >= cy1:
        return None
    return (
        (slice(cy0, cy1), slice(cx0, cx1)),
        (slice(cy0 - y0, cy1 - y0), slice(cx0 - x0, cx1 - x0)),
    )


def _bbox(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return (int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def _warp_sources(pods):
    # Per-asset contiguous alpha (nearest warp) and float RGBA (bilinear warp).
    return {
        a.id: (np.ascontiguousarray(a.pixels[..., 3]), a.pixels.astype(np.float32))
        for a in pods
    }


def compose_scene(config, pods, backgrounds, scene_index, _cache=None):
    """Generate scene ``scene_index``; a pure function of its arguments."""
    t0 = time.perf_counter()
    rng = derive_scene_rng(config.master_seed, scene_index)
    cw, ch = config.canvas
    c = config.overlap_coefficient

    bg = backgrounds[int(rng.integers(len(backgrounds)))]
    if bg.pixels.shape[:2] != (ch, cw):
        raise InvalidArgument(f"background {bg.id!r} does not match canvas {config.canvas}")
    image = bg.pixels.astype(np.float32)
    owner = np.zeros((ch, cw), dtype=np.int32)
    sources = _cache if _cache is not None else _warp_sources(pods)

    placements, amodal = [], []
    centers = np.empty((config.max_attempts, 2))
    widths = np.empty(config.max_attempts)
    attempts = consecutive = n_placed = 0
    while attempts < config.max_attempts and consecutive < config.max_consecutive_rejections:
        attempts += 1
        pod = pods[int(rng.integers(len(pods)))]
        rotation, scale, center = sample_transform(rng, config)
        accepted = False
        if _inside(center, config.canvas):
            warp = _Warp(pod, rotation, scale, center)
            mask = warp.mask(sources[pod.id][0])
            box = _bbox(mask)
            # Pods wider or taller than the canvas can never be placed.
            if box is not None and box[2] <= cw and box[3] <= ch:
                bbox = (warp.x0 + box[0], warp.y0 + box[1], box[2], box[3])
                if _separated(center, bbox[2], centers[:n_placed], widths[:n_placed], c):
                    accepted = True
        if not accepted:
            consecutive += 1
            continue
        consecutive = 0
        z = len(placements)
        placements.append(Placement(pod.id, center, rotation, scale, z, bbox))
        centers[z] = center
        widths[z] = bbox[2]
        n_placed = z + 1

        win = _window(warp.x0, warp.y0, mask.shape, config.canvas)
        if win is None:
            amodal.append(0)
            continue
        canvas_sl, local_sl = win
        m = mask[local_sl]
        owner[canvas_sl][m] = z + 1
        amodal.append(int(m.sum()))
        rgba = warp.rgba(sources[pod.id][1])[local_sl]
        alpha = rgba[..., 3:] / 255.0
        region = image[canvas_sl]
        region *= 1.0 - alpha
        region += rgba[..., :3]

    n = len(placements)
    visible = np.bincount(owner.ravel(), minlength=n + 1)[1:]
    keep = [
        k for k in range(n)
        if visible[k] > 0 and visible[k] >= config.min_visible_fraction * amodal[k]
    ]
    lut = np.zeros(n + 1, dtype=np.int32)
    lut[np.array(keep, dtype=np.int64) + 1] = np.arange(1, len(keep) + 1, dtype=np.int32)
    labels = lut[owner]
    by_label = encode_labels(labels)
    empty = {"size": [ch, cw], "counts": [ch * cw]}
    rles = [by_label.get(i + 1, empty) for i in range(len(keep))]
    instances = []
    for new_id, (k, rle) in enumerate(zip(keep, rles)):
        instances.append(SceneInstance(
            instance_id=new_id,
            placement=placements[k],
            visible_pixels=rle,
            visible_bbox=to_bbox(rle),
            amodal_area=amodal[k],
            mask_color=mask_color(new_id),
        ))
    if attempts and not instances:
        log.warning("scene %d has no instances after %d attempts", scene_index, attempts)

    return Scene(
        image=np.clip(np.rint(image), 0, 255).astype(np.uint8),
        mask=_labels_to_rgb(labels),
        instances=instances,
        config_snapshot=config,
        scene_index=scene_index,
        background_id=bg.id,
        placements=placements,
        attempts=attempts,
        elapsed_s=time.perf_counter() - t0,
    )


def generate_scenes(config, pods, backgrounds, indices, threads=1):
    """Yield ``compose_scene`` results for ``indices`` in order.

    Up to ``2 * threads`` scenes are in flight at once; the output is
    independent of ``threads`` because every scene owns its random stream.
    """
    indices = list(indices)
    cache = _warp_sources(pods)
    if threads <= 1:
        for i in indices:
            yield compose_scene(config, pods, backgrounds, i, cache)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = deque()
        it = iter(indices)
        for i in it:
            pending.append(pool.submit(compose_scene, config, pods, backgrounds, i, cache))
            if len(pending) >= 2 * threads:
                break
        for i in it:
            yield pending.popleft().result()
            pending.append(pool.submit(compose_scene, config, pods, backgrounds, i, cache))
        while pending:
            yield pending.popleft().result()


def overlay(image, masks, bboxes, colors, draw_boxes=True):
    """Tint each mask at 50% opacity with its colour and outline its box.

    ``masks`` are boolean arrays of the image's height and width.
    """
    out = image.astype(np.uint16)
    for m, color in zip(masks, colors):
        out[m] = (out[m] + np.asarray(color, dtype=np.uint16) + 1) // 2
    out = out.astype(np.uint8)
    if draw_boxes:
        h, w = out.shape[:2]
        for (x, y, bw, bh), color in zip(bboxes, colors):
            if bw <= 0 or bh <= 0:
                continue
            x0, y0 = max(int(x), 0), max(int(y), 0)
            x1, y1 = min(int(x + bw) - 1, w - 1), min(int(y + bh) - 1, h - 1)
            out[y0, x0 : x1 + 1] = color
            out[y1, x0 : x1 + 1] = color
            out[y0 : y1 + 1, x0] = color
            out[y0 : y1 + 1, x1] = color
    return out


def render_overlay(scene, draw_boxes=True):
    masks = [decode(inst.visible_pixels) for inst in scene.instances]
    bboxes = [inst.visible_bbox for inst in scene.instances]
    colors = [inst.mask_color for inst in scene.instances]
    return overlay(scene.image, masks, bboxes, colors, draw_boxes)
