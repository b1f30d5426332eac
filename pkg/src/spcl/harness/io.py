"""Dataset files: JSON Lines, one bag per line.

Line layout::

    {"id": str, "weak_labels": [int, ...], "saliency_box": [x0, y0, x1, y1] | null,
     "hypotheses": [{"bbox": [...], "feat": [...]}, ...],
     "gt": [{"class": int, "bbox": [...]}, ...] | null,
     "num_classes": int}

Class indices are 1-based on disk and 0-based in memory.  ``num_classes`` is
optional on read; when absent it is inferred from the largest class seen.
Floats are written with ``repr`` precision so a round trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import BBox, Dataset, GtObject, ImageBag, SpclError


def _bag_to_obj(bag: ImageBag, num_classes: int) -> dict:
    return {
        "id": bag.id,
        "weak_labels": [c + 1 for c in sorted(bag.weak_labels)],
        "saliency_box": None if bag.saliency_box is None else list(bag.saliency_box.as_tuple()),
        "hypotheses": [{"bbox": bag.boxes[i].tolist(), "feat": bag.feats[i].tolist()}
                       for i in range(bag.n)],
        "gt": None if bag.gt_objects is None else [
            {"class": o.cls + 1, "bbox": list(o.bbox.as_tuple())} for o in bag.gt_objects],
        "num_classes": num_classes,
    }


def save_dataset(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for bag in data.bags:
            fh.write(json.dumps(_bag_to_obj(bag, data.num_classes), separators=(",", ":")))
            fh.write("\n")


def _class_index(value, lineno: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise SpclError(f"line {lineno}: class index must be an integer >= 1, got {value!r}")
    return value - 1


def _bag_from_obj(obj, lineno: int) -> tuple[ImageBag, int | None]:
    if not isinstance(obj, dict):
        raise SpclError(f"line {lineno}: expected a JSON object")
    try:
        bag_id = obj["id"]
        hyps = obj["hypotheses"]
        weak = obj["weak_labels"]
    except KeyError as exc:
        raise SpclError(f"line {lineno}: missing key {exc.args[0]!r}") from None
    if not isinstance(bag_id, str):
        raise SpclError(f"line {lineno}: id must be a string")
    if not isinstance(hyps, list) or not hyps:
        raise SpclError(f"line {lineno}: bag {bag_id} needs a non-empty hypotheses list")
    try:
        feats = [h["feat"] for h in hyps]
        boxes = [h["bbox"] for h in hyps]
    except (KeyError, TypeError):
        raise SpclError(f"line {lineno}: bag {bag_id}: every hypothesis needs bbox and feat") from None
    dims = {len(f) if isinstance(f, list) else -1 for f in feats}
    if len(dims) != 1 or -1 in dims:
        raise SpclError(f"line {lineno}: bag {bag_id}: inconsistent feature dimension")
    sal = obj.get("saliency_box")
    gt = obj.get("gt")
    try:
        bag = ImageBag(
            id=bag_id,
            feats=np.array(feats, dtype=np.float64),
            boxes=np.array(boxes, dtype=np.float64).reshape(len(boxes), -1),
            weak_labels=frozenset(_class_index(c, lineno) for c in weak),
            saliency_box=None if sal is None else BBox.from_seq(sal),
            gt_objects=None if gt is None else tuple(
                GtObject(_class_index(g["class"], lineno), BBox.from_seq(g["bbox"])) for g in gt),
        )
    except SpclError as exc:
        raise SpclError(f"line {lineno}: {exc}") from None
    except (ValueError, TypeError, KeyError) as exc:
        raise SpclError(f"line {lineno}: bag {bag_id}: {exc}") from None
    nc = obj.get("num_classes")
    if nc is not None and (isinstance(nc, bool) or not isinstance(nc, int) or nc < 1):
        raise SpclError(f"line {lineno}: num_classes must be a positive integer")
    return bag, nc


def load_dataset(path, num_classes: int | None = None) -> Dataset:
    bags, declared = [], set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SpclError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            bag, nc = _bag_from_obj(obj, lineno)
            if bags and bag.feats.shape[1] != bags[0].feats.shape[1]:
                raise SpclError(
                    f"line {lineno}: bag {bag.id} has feature dimension {bag.feats.shape[1]}, "
                    f"expected {bags[0].feats.shape[1]}")
            if nc is not None:
                declared.add(nc)
            bags.append(bag)
    if len(declared) > 1:
        raise SpclError(f"conflicting num_classes values {sorted(declared)}")
    if num_classes is None:
        if declared:
            num_classes = declared.pop()
        else:
            seen = [c for b in bags for c in b.weak_labels]
            seen += [o.cls for b in bags for o in (b.gt_objects or ())]
            num_classes = max(seen) + 1 if seen else 1
    feat_dim = bags[0].feats.shape[1] if bags else 0
    return Dataset(tuple(bags), num_classes, feat_dim)
