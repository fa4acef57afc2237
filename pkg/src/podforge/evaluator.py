"""Box and mask AP / recall for instance predictions.

Conventions:

* IoU thresholds are 0.50, 0.55, ..., 0.95; a match needs IoU >= threshold.
* Within each image, detections are visited by descending score (ties by
  input order) and each takes the still-unmatched ground truth of highest
  IoU (ties by ground-truth input order).
* AP is the 101-point interpolated average: the mean, over recall levels
  0.00, 0.01, ..., 1.00, of the best precision reached at recall >= level,
  with detections ranked globally by the same score order.
* Recall at a threshold is matched ground truths over all ground truths using
  every detection (no per-image cap).
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from podforge import rle as rle_ops
from podforge.errors import InvalidArgument, Undefined

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
RECALL_LEVELS = np.arange(101) / 100


@dataclass
class Detection:
    image_id: int
    score: float
    bbox: tuple
    segmentation: Optional[dict] = None
    category_id: int = 1

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise InvalidArgument(f"detection score must be in [0, 1], got {self.score}")
        if len(self.bbox) != 4 or self.bbox[2] < 0 or self.bbox[3] < 0:
            raise InvalidArgument(f"bad detection bbox {self.bbox}")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                image_id=int(d["image_id"]),
                score=float(d.get("score", 1.0)),
                bbox=tuple(float(v) for v in d["bbox"]),
                segmentation=d.get("segmentation"),
                category_id=int(d.get("category_id", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed detection record: {exc}") from exc

    def to_dict(self):
        d = {
            "image_id": self.image_id,
            "category_id": self.category_id,
            "score": self.score,
            "bbox": list(self.bbox),
        }
        if self.segmentation is not None:
            d["segmentation"] = self.segmentation
        return d


@dataclass
class EvalReport:
    recall_50_95: float
    ap_50: float
    ap_75: float
    ap_50_95: float
    mode: str
    per_threshold: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mode": self.mode,
            "recall_50_95": self.recall_50_95,
            "ap_50": self.ap_50,
            "ap_75": self.ap_75,
            "ap_50_95": self.ap_50_95,
            "per_threshold": {
                f"{t:.2f}": {"ap": ap, "max_recall": rec} for t, (ap, rec) in self.per_threshold.items()
            },
        }


@dataclass
class Assignment:
    """Matching outcome. ``det_gt[i]`` is the matched gt index or -1."""

    det_gt: list
    gt_matched: list
    scores: list

    @property
    def n_gt(self):
        return len(self.gt_matched)

    @property
    def n_matched(self):
        return sum(self.gt_matched)


def iou_box(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    inter = max(iw, 0) * max(ih, 0)
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def iou_mask(a, b):
    return rle_ops.iou(a, b)


def _field(rec, name):
    return rec[name] if isinstance(rec, dict) else getattr(rec, name)


def _group(records):
    groups = defaultdict(list)
    for i, r in enumerate(records):
        groups[(_field(r, "image_id"), _field(r, "category_id"))].append(i)
    return groups


def _iou_tables(gts, dets, iou_fn):
    """IoU matrix per (image, category) group, computed once."""
    g_groups = _group(gts)
    tables = {}
    for key, d_idx in _group(dets).items():
        g_idx = g_groups.get(key, [])
        m = np.zeros((len(d_idx), len(g_idx)))
        for a, di in enumerate(d_idx):
            for b, gi in enumerate(g_idx):
                m[a, b] = iou_fn(dets[di], gts[gi])
        tables[key] = (d_idx, g_idx, m)
    return tables


def _match(tables, dets, n_gt, thresh):
    det_gt = [-1] * len(dets)
    gt_matched = [False] * n_gt
    for d_idx, g_idx, m in tables.values():
        if not g_idx:
            continue
        taken = np.zeros(len(g_idx), dtype=bool)
        for a in sorted(range(len(d_idx)), key=lambda a: (-_field(dets[d_idx[a]], "score"), d_idx[a])):
            row = np.where(taken, -1.0, m[a])
            b = int(np.argmax(row))
            if not taken[b] and row[b] >= thresh:
                taken[b] = True
                det_gt[d_idx[a]] = g_idx[b]
                gt_matched[g_idx[b]] = True
    return Assignment(det_gt, gt_matched, [_field(d, "score") for d in dets])


def match_greedy(gts, dets, iou_thresh, iou_fn):
    """Greedy per-image matching; ``iou_fn(det, gt)`` returns their IoU."""
    return _match(_iou_tables(gts, dets, iou_fn), dets, len(gts), iou_thresh)


def average_precision(assignment):
    if assignment.n_gt == 0:
        raise Undefined("average precision is undefined without ground truths")
    scores = assignment.scores
    if not scores:
        return 0.0
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    tp = np.array([assignment.det_gt[i] >= 0 for i in order], dtype=np.float64)
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(order) + 1)
    recall = ctp / assignment.n_gt
    # Best precision at or beyond each rank.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_LEVELS, side="left")
    values = np.where(idx < len(order), envelope[np.minimum(idx, len(order) - 1)], 0.0)
    return float(values.sum() / len(RECALL_LEVELS))


def _box_iou(d, g):
    return iou_box(_field(d, "bbox"), _field(g, "bbox"))


def _mask_iou_fn():
    boxes = {}

    def seg_box(rec):
        key = id(rec)
        if key not in boxes:
            boxes[key] = rle_ops.to_bbox(_field(rec, "segmentation"))
        return boxes[key]

    def fn(d, g):
        db, gb = seg_box(d), seg_box(g)
        # Masks whose tight boxes are disjoint cannot overlap.
        if iou_box(db, gb) == 0:
            return 0.0
        return iou_mask(_field(d, "segmentation"), _field(g, "segmentation"))

    return fn


def evaluate(gts, dets, mode="mask"):
    """Recall@[.5:.95], AP50, AP75 and AP@[.5:.95] for ``dets`` against ``gts``."""
    if mode not in ("box", "mask"):
        raise InvalidArgument(f"mode must be 'box' or 'mask', got {mode!r}")
    gts, dets = list(gts), list(dets)
    if not gts:
        raise Undefined("evaluation is undefined without ground truths")
    if mode == "mask":
        missing = [r for r in gts + dets if _field(r, "segmentation") is None]
        if missing:
            raise InvalidArgument("mask mode needs a segmentation on every record")
    tables = _iou_tables(gts, dets, _mask_iou_fn() if mode == "mask" else _box_iou)
    per = {}
    for t in IOU_THRESHOLDS:
        a = _match(tables, dets, len(gts), t)
        per[t] = (average_precision(a), a.n_matched / a.n_gt)
    aps = [per[t][0] for t in IOU_THRESHOLDS]
    recalls = [per[t][1] for t in IOU_THRESHOLDS]
    return EvalReport(
        recall_50_95=sum(recalls) / len(recalls),
        ap_50=per[0.5][0],
        ap_75=per[0.75][0],
        ap_50_95=sum(aps) / len(aps),
        mode=mode,
        per_threshold=per,
    )


TABLE_COLUMNS = ("Recall@[.5:.95]", "AP50", "AP75", "AP@[.5:.95]")


def format_report_table(reports, labels=None):
    """Aligned text table, one row per report, in the order of TABLE_COLUMNS."""
    labels = list(labels) if labels is not None else []
    lw = max([len(s) for s in labels] + [0])
    head = ([f"{'':<{lw}}"] if lw else []) + [f"{c:>{max(len(c), 5)}}" for c in TABLE_COLUMNS]
    lines = ["  ".join(head)]
    for k, r in enumerate(reports):
        vals = (r.recall_50_95, r.ap_50, r.ap_75, r.ap_50_95)
        cells = ([f"{labels[k]:<{lw}}"] if lw else []) + [
            f"{v:>{max(len(c), 5)}.3f}" for c, v in zip(TABLE_COLUMNS, vals)
        ]
        lines.append("  ".join(cells))
    return "\n".join(lines)
