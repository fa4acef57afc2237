"""Image augmentations that carry their annotations along.

Geometric operations (``flip_ud``, ``rotate`` by multiples of 90 degrees,
``resize``) move masks and boxes with the pixels; photometric operations
(``brightness``, ``gaussian_blur``) return the annotations untouched.
Annotations are :class:`podforge.annotations.InstanceAnnotation` records.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from PIL import Image

from podforge import rle as rle_ops
from podforge.errors import InvalidArgument

OPS = ("flip_ud", "rotate", "brightness", "gaussian_blur", "resize")


@dataclass(frozen=True)
class AugmentSpec:
    op: str
    angle: Optional[float] = None
    factor: Optional[float] = None
    sigma: Optional[float] = None
    long_side: Optional[int] = None

    def __post_init__(self):
        if self.op not in OPS:
            raise InvalidArgument(f"unknown augmentation {self.op!r}")
        if self.op == "rotate":
            if self.angle is None or self.angle % 90 != 0:
                raise InvalidArgument(f"rotation angle must be a multiple of 90, got {self.angle}")
        elif self.op == "brightness":
            if self.factor is None or not self.factor > 0:
                raise InvalidArgument(f"brightness factor must be > 0, got {self.factor}")
        elif self.op == "gaussian_blur":
            if self.sigma is None or not self.sigma >= 0:
                raise InvalidArgument(f"blur sigma must be >= 0, got {self.sigma}")
        elif self.op == "resize":
            if self.long_side is None or int(self.long_side) < 1:
                raise InvalidArgument(f"resize needs a positive long_side, got {self.long_side}")

    def to_dict(self):
        d = {"op": self.op}
        for k in ("angle", "factor", "sigma", "long_side"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _remap(annotations, fn, bbox_fn):
    out = []
    for a in annotations:
        m = fn(rle_ops.decode(a.segmentation))
        seg = rle_ops.encode(m)
        out.append(replace(a, segmentation=seg, bbox=bbox_fn(a.bbox), area=rle_ops.area(seg)))
    return out


def flip_ud(image, annotations):
    h = image.shape[0]
    return (
        np.ascontiguousarray(image[::-1]),
        _remap(annotations, lambda m: m[::-1], lambda b: (b[0], h - b[1] - b[3], b[2], b[3])),
    )


def _rot90_once(image, annotations):
    # Counter-clockwise: pixel (row, col) moves to (W - 1 - col, row).
    w = image.shape[1]
    return (
        np.ascontiguousarray(np.rot90(image)),
        _remap(annotations, np.rot90, lambda b: (b[1], w - b[0] - b[2], b[3], b[2])),
    )


def rotate(image, annotations, angle):
    """Rotate counter-clockwise by ``angle`` degrees (a multiple of 90)."""
    if angle % 90 != 0:
        raise InvalidArgument(f"rotation angle must be a multiple of 90, got {angle}")
    for _ in range(int(angle // 90) % 4):
        image, annotations = _rot90_once(image, annotations)
    return image, list(annotations)


def brightness(image, factor):
    if not factor > 0:
        raise InvalidArgument(f"brightness factor must be > 0, got {factor}")
    if factor == 1:
        return image.copy()
    return np.clip(np.rint(image.astype(np.float64) * factor), 0, 255).astype(np.uint8)


def gaussian_kernel(sigma):
    """Unit-sum Gaussian taps truncated at ``ceil(3 * sigma)``."""
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(a, kernel, axis):
    r = kernel.size // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    # Half-sample mirroring keeps the blur a doubly stochastic operator, so the
    # image mean survives exactly up to the final rounding.
    padded = np.pad(a, pad, mode="symmetric")
    out = np.zeros_like(a)
    n = a.shape[axis]
    for i, k in enumerate(kernel):
        out += k * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(image, sigma):
    """Separable blur with mirrored borders; ``sigma == 0`` is identity."""
    if not sigma >= 0:
        raise InvalidArgument(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return image.copy()
    k = gaussian_kernel(sigma)
    a = image.astype(np.float64)
    a = _convolve_axis(_convolve_axis(a, k, 0), k, 1)
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def resized_shape(shape, target_long_side):
    h, w = shape[:2]
    f = target_long_side / max(h, w)
    return max(1, math.floor(h * f + 0.5)), max(1, math.floor(w * f + 0.5)), f


def _nearest(mask, new_h, new_w):
    h, w = mask.shape
    rows = np.minimum(((np.arange(new_h) + 0.5) * h / new_h).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(new_w) + 0.5) * w / new_w).astype(np.int64), w - 1)
    return mask[rows[:, None], cols[None, :]]


def resize(image, annotations, target_long_side):
    """Downscale so the longer side equals ``target_long_side``.

    Pixels are resampled with a Lanczos filter, masks nearest-neighbour, and
    boxes are scaled by the single factor ``target / long side``.
    """
    h, w = image.shape[:2]
    if target_long_side > max(h, w):
        raise InvalidArgument(f"refusing to upscale {w}x{h} to long side {target_long_side}")
    if target_long_side == max(h, w):
        return image.copy(), list(annotations)
    new_h, new_w, f = resized_shape(image.shape, target_long_side)
    out = np.asarray(Image.fromarray(image).resize((new_w, new_h), Image.LANCZOS))
    anns = _remap(
        annotations,
        lambda m: _nearest(m, new_h, new_w),
        lambda b: tuple(v * f for v in b),
    )
    return out, anns


def apply(spec, image, annotations):
    annotations = list(annotations)
    if spec.op == "flip_ud":
        return flip_ud(image, annotations)
    if spec.op == "rotate":
        return rotate(image, annotations, spec.angle)
    if spec.op == "brightness":
        return brightness(image, spec.factor), annotations
    if spec.op == "gaussian_blur":
        return gaussian_blur(image, spec.sigma), annotations
    return resize(image, annotations, int(spec.long_side))


DEFAULT_AUGMENTATIONS = (
    AugmentSpec("flip_ud"),
    AugmentSpec("rotate", angle=90),
    AugmentSpec("rotate", angle=180),
    AugmentSpec("rotate", angle=270),
    AugmentSpec("brightness", factor=0.8),
    AugmentSpec("brightness", factor=1.2),
    AugmentSpec("gaussian_blur", sigma=1.0),
)
