"""Uncompressed run-length encoding of binary masks.

The layout follows the common detection-dataset convention: the mask is
flattened column-major (Fortran order), ``counts`` alternates
background/foreground run lengths and always starts with a background run
(which may be 0), and ``size`` is ``[height, width]``.
"""

import numpy as np

from podforge.errors import InvalidArgument


def encode(mask):
    """Encode a 2-D boolean-like array as ``{"size": [h, w], "counts": [...]}``."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InvalidArgument(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    flat = mask.ravel(order="F").astype(bool)
    n = flat.size
    if n == 0:
        return {"size": [h, w], "counts": []}
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return {"size": [h, w], "counts": counts}


def decode(rle):
    h, w = rle["size"]
    counts = np.asarray(rle["counts"], dtype=np.int64)
    if counts.sum() != h * w:
        raise InvalidArgument(f"RLE counts sum to {counts.sum()}, expected {h * w}")
    values = np.zeros(counts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F")


def encode_labels(labels):
    """RLE of every nonzero value of an integer label map, keyed by value.

    One column-major pass over the map; equivalent to ``encode(labels == v)``
    for each value ``v``.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    total = h * w
    if total == 0:
        return {}
    flat = labels.ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], changes))
    ends = np.concatenate((changes, [total]))
    vals = flat[starts]
    fg = vals != 0
    starts, ends, vals = starts[fg], ends[fg], vals[fg]
    order = np.argsort(vals, kind="stable")
    starts, ends, vals = starts[order], ends[order], vals[order]
    uniq, first = np.unique(vals, return_index=True)
    bounds = np.append(first, vals.size)
    out = {}
    for v, lo, hi in zip(uniq.tolist(), bounds[:-1], bounds[1:]):
        s, e = starts[lo:hi], ends[lo:hi]
        counts = np.empty(2 * s.size + 1, dtype=np.int64)
        counts[0:-1:2] = s - np.concatenate(([0], e[:-1]))
        counts[1::2] = e - s
        counts[-1] = total - e[-1]
        if counts[-1] == 0:
            counts = counts[:-1]
        out[v] = {"size": [h, w], "counts": counts.tolist()}
    return out


def _runs(rle):
    # Foreground runs as (start, end) index arrays in column-major order.
    counts = np.asarray(rle["counts"], dtype=np.int64)
    ends = np.cumsum(counts)
    starts = ends - counts
    fg = slice(1, None, 2)
    keep = counts[fg] > 0
    return starts[fg][keep], ends[fg][keep]


def area(rle):
    return int(np.asarray(rle["counts"], dtype=np.int64)[1::2].sum())


def to_bbox(rle):
    """Tight ``(x, y, w, h)`` box of the foreground, computed from runs only.

    Returns ``(0, 0, 0, 0)`` for an empty mask.
    """
    h = rle["size"][0]
    starts, ends = _runs(rle)
    if starts.size == 0:
        return (0, 0, 0, 0)
    last = ends - 1
    col0, col1 = starts // h, last // h
    row0, row1 = starts % h, last % h
    spans = col0 != col1
    # A run crossing a column boundary covers every row in between.
    ymin = int(np.where(spans, 0, row0).min())
    ymax = int(np.where(spans, h - 1, row1).max())
    xmin, xmax = int(col0.min()), int(col1.max())
    return (xmin, ymin, xmax - xmin + 1, ymax - ymin + 1)


def _covered(starts, ends, t):
    # Measure of the run set intersected with [0, t), for each t.
    lengths = ends - starts
    before = np.concatenate(([0], np.cumsum(lengths)))
    i = np.searchsorted(starts, t, side="right") - 1
    safe = np.clip(i, 0, None)
    partial = np.clip(t - starts[safe], 0, lengths[safe])
    return np.where(i >= 0, before[safe] + partial, 0)


def intersection(a, b):
    """Pixel count of ``a AND b`` without decoding either mask."""
    if list(a["size"]) != list(b["size"]):
        raise InvalidArgument(f"size mismatch: {a['size']} vs {b['size']}")
    sa, ea = _runs(a)
    sb, eb = _runs(b)
    if sa.size == 0 or sb.size == 0:
        return 0
    return int((_covered(sa, ea, eb) - _covered(sa, ea, sb)).sum())


def iou(a, b):
    inter = intersection(a, b)
    union = area(a) + area(b) - inter
    return inter / union if union > 0 else 0.0
