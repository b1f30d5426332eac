"""VOC-style detection metrics: greedy matching, 11-point AP, CorLoc."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import BBox, SpclError, iou


@dataclass(frozen=True)
class Detection:
    bag_id: str
    cls: int
    bbox: BBox
    score: float


def _rank_key(d: Detection):
    return (-d.score, d.bag_id, d.bbox.as_tuple())


def match_detections(dets: Sequence[Detection], gt: Mapping, iou_thresh: float = 0.5) -> list:
    """Greedy matching in descending score order.

    ``gt`` maps bag id -> sequence of ``(class, BBox)``.  A detection is a
    true positive when some not-yet-matched ground truth of its class in its
    bag overlaps it by at least ``iou_thresh``; it claims the best such one.
    """
    if not 0 < iou_thresh < 1:
        raise SpclError("iou_thresh must lie in (0, 1)")
    taken = {bag: [False] * len(objs) for bag, objs in gt.items()}
    out = []
    for d in sorted(dets, key=_rank_key):
        objs = gt.get(d.bag_id, ())
        best, best_j = -1.0, -1
        for j, (c, box) in enumerate(objs):
            if c != d.cls or taken[d.bag_id][j]:
                continue
            ov = iou(d.bbox, box)
            if ov >= iou_thresh and ov > best:
                best, best_j = ov, j
        if best_j >= 0:
            taken[d.bag_id][best_j] = True
        out.append((d, best_j >= 0))
    return out


def average_precision(matched: Sequence, num_gt: int) -> float:
    """11-point interpolated AP (VOC2007) of a ranked TP/FP list.

    ``matched`` is the output of :func:`match_detections` (already ranked)
    or a plain sequence of booleans in rank order.
    """
    if num_gt < 1:
        raise SpclError("average precision is undefined without ground truth")
    flags = np.array([m[1] if isinstance(m, tuple) else bool(m) for m in matched], dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    rec = tp / num_gt
    prec = tp / (tp + fp)
    ap = 0.0
    for k in range(11):
        t = k / 10
        sel = rec >= t
        ap += prec[sel].max() if sel.any() else 0.0
    return float(ap / 11)


def evaluate_detections(dets: Sequence[Detection], gt: Mapping, num_classes: int,
                        iou_thresh: float = 0.5) -> dict:
    """Per-class AP and their mean over classes that have ground truth."""
    per_class = []
    for c in range(num_classes):
        num_gt = sum(1 for objs in gt.values() for cls, _ in objs if cls == c)
        if num_gt == 0:
            per_class.append(None)
            continue
        matched = match_detections([d for d in dets if d.cls == c], gt, iou_thresh)
        per_class.append(average_precision(matched, num_gt))
    scored = [ap for ap in per_class if ap is not None]
    return {"per_class_ap": per_class, "mean_ap": float(np.mean(scored)) if scored else 0.0}


def corloc(train_bags: Sequence, localized_boxes: Mapping, gt: Mapping, iou_thresh: float = 0.5) -> float:
    """Fraction of (bag, weak label) pairs whose localized box hits a
    ground-truth object of that class.

    ``localized_boxes`` maps ``(bag_id, class)`` to the top-scored box; a
    missing entry counts as a miss.
    """
    hits = total = 0
    for bag in train_bags:
        for c in sorted(bag.weak_labels):
            total += 1
            box = localized_boxes.get((bag.id, c))
            if box is None:
                continue
            if any(cls == c and iou(box, g) >= iou_thresh for cls, g in gt.get(bag.id, ())):
                hits += 1
    return hits / total if total else 0.0
