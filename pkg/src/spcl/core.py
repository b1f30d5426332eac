"""Shared value types and box geometry.

Classes are 0-based here (files use 1-based ids); a hypothesis labeled as
background has state ``BACKGROUND`` (-1) rather than a class index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels

BACKGROUND = -1


class SpclError(ValueError):
    """Invalid input to one of the solver stages."""


@dataclass(frozen=True, order=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(v) for v in vals):
            raise SpclError(f"non-finite box {vals}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise SpclError(f"degenerate box {vals}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "BBox":
        if len(seq) != 4:
            raise SpclError(f"box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes with continuous areas."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IOU between two ``(n, 4)`` box arrays."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    return kernels.iou_matrix(a, b)


def _check_boxes(boxes: np.ndarray, where: str) -> None:
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise SpclError(f"{where}: boxes must have shape (n, 4), got {boxes.shape}")
    if not np.all(np.isfinite(boxes)):
        raise SpclError(f"{where}: non-finite box coordinates")
    if np.any(boxes[:, 0] >= boxes[:, 2]) or np.any(boxes[:, 1] >= boxes[:, 3]):
        raise SpclError(f"{where}: degenerate box (need x0 < x1 and y0 < y1)")


class Hypothesis(NamedTuple):
    id: int
    feat: np.ndarray
    bbox: BBox


class GtObject(NamedTuple):
    cls: int
    bbox: BBox


@dataclass(frozen=True, eq=False)
class ImageBag:
    """One weakly labeled image: ``n`` hypotheses stored as dense arrays."""

    id: str
    feats: np.ndarray
    boxes: np.ndarray
    weak_labels: frozenset = frozenset()
    saliency_box: Optional[BBox] = None
    gt_objects: Optional[tuple] = None

    def __post_init__(self):
        feats = np.ascontiguousarray(self.feats, dtype=np.float64)
        boxes = np.ascontiguousarray(self.boxes, dtype=np.float64)
        if feats.ndim != 2:
            raise SpclError(f"bag {self.id}: feats must be 2-D")
        if feats.shape[0] == 0:
            raise SpclError(f"bag {self.id}: no hypotheses")
        if boxes.shape[0] != feats.shape[0]:
            raise SpclError(f"bag {self.id}: {boxes.shape[0]} boxes for {feats.shape[0]} features")
        if not np.all(np.isfinite(feats)):
            raise SpclError(f"bag {self.id}: non-finite feature values")
        _check_boxes(boxes, f"bag {self.id}")
        feats.setflags(write=False)
        boxes.setflags(write=False)
        object.__setattr__(self, "feats", feats)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "weak_labels", frozenset(int(c) for c in self.weak_labels))
        if self.gt_objects is not None:
            object.__setattr__(
                self, "gt_objects", tuple(GtObject(int(c), b) for c, b in self.gt_objects)
            )

    @property
    def n(self) -> int:
        return self.feats.shape[0]

    @property
    def hypotheses(self) -> list[Hypothesis]:
        return [
            Hypothesis(i, self.feats[i], BBox(*self.boxes[i])) for i in range(self.n)
        ]

    def __eq__(self, other):
        if not isinstance(other, ImageBag):
            return NotImplemented
        return (
            self.id == other.id
            and self.weak_labels == other.weak_labels
            and self.saliency_box == other.saliency_box
            and self.gt_objects == other.gt_objects
            and np.array_equal(self.feats, other.feats)
            and np.array_equal(self.boxes, other.boxes)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    bags: tuple
    num_classes: int
    feat_dim: int

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        if self.num_classes < 1:
            raise SpclError("num_classes must be >= 1")
        for bag in self.bags:
            if bag.feats.shape[1] != self.feat_dim:
                raise SpclError(
                    f"bag {bag.id}: feature length {bag.feats.shape[1]} != {self.feat_dim}"
                )
            bad = [c for c in bag.weak_labels if not 0 <= c < self.num_classes]
            if bad:
                raise SpclError(f"bag {bag.id}: weak label(s) {bad} out of range")
            for obj in bag.gt_objects or ():
                if not 0 <= obj.cls < self.num_classes:
                    raise SpclError(f"bag {bag.id}: ground-truth class {obj.cls} out of range")

    def __len__(self) -> int:
        return len(self.bags)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.feat_dim == other.feat_dim
            and self.bags == other.bags
        )

    __hash__ = None

    @cached_property
    def offsets(self) -> np.ndarray:
        sizes = [bag.n for bag in self.bags]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    @cached_property
    def X(self) -> np.ndarray:
        if not self.bags:
            return np.zeros((0, self.feat_dim))
        return np.ascontiguousarray(np.vstack([bag.feats for bag in self.bags]))

    @cached_property
    def boxes(self) -> np.ndarray:
        if not self.bags:
            return np.zeros((0, 4))
        return np.ascontiguousarray(np.vstack([bag.boxes for bag in self.bags]))

    @property
    def num_hypotheses(self) -> int:
        return int(self.offsets[-1])

    def bag_index(self) -> dict:
        return {bag.id: k for k, bag in enumerate(self.bags)}


# --------------------------------------------------------------------------
# per-hypothesis variables

def _check_states(states: np.ndarray, weak_labels: Iterable[int], num_classes: int, where: str) -> None:
    if np.any((states < BACKGROUND) | (states >= num_classes)):
        raise SpclError(f"{where}: label state out of range")
    for c in weak_labels:
        if not np.any(states == c):
            raise SpclError(f"{where}: no hypothesis is positive for weak label {c}")


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Pseudo-labels y, one state per hypothesis (background or a class).

    The state encoding makes "entries are +-1" and "at most one +1 per
    hypothesis" hold by construction; the "every weak label is covered"
    condition is checked here.
    """

    states: tuple
    num_classes: int
    weak_labels: tuple = field(repr=False)

    def __post_init__(self):
        states = tuple(np.asarray(s, dtype=np.int64).copy() for s in self.states)
        if len(states) != len(self.weak_labels):
            raise SpclError("one label vector per bag required")
        for k, (s, wl) in enumerate(zip(states, self.weak_labels)):
            _check_states(s, wl, self.num_classes, f"bag #{k}")
            s.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weak_labels", tuple(frozenset(w) for w in self.weak_labels))

    @classmethod
    def for_dataset(cls, data: Dataset, states: Sequence) -> "LabelMatrix":
        for bag, s in zip(data.bags, states):
            if len(s) != bag.n:
                raise SpclError(f"bag {bag.id}: {len(s)} labels for {bag.n} hypotheses")
        return cls(tuple(states), data.num_classes, tuple(b.weak_labels for b in data.bags))

    @classmethod
    def from_pm1(cls, data: Dataset, blocks: Sequence) -> "LabelMatrix":
        """Build from per-bag ``(n_k, C)`` matrices with entries in {-1, +1}."""
        states = []
        for bag, y in zip(data.bags, blocks):
            y = np.asarray(y)
            if y.shape != (bag.n, data.num_classes):
                raise SpclError(f"bag {bag.id}: label block has shape {y.shape}")
            if not np.all((y == 1) | (y == -1)):
                raise SpclError(f"bag {bag.id}: labels must be -1 or +1")
            pos = y == 1
            if np.any(pos.sum(axis=1) > 1):
                raise SpclError(f"bag {bag.id}: hypothesis positive for more than one class")
            s = np.where(pos.any(axis=1), pos.argmax(axis=1), BACKGROUND)
            states.append(s)
        return cls.for_dataset(data, states)

    def pm1(self, k: int) -> np.ndarray:
        s = self.states[k]
        out = -np.ones((s.shape[0], self.num_classes))
        fg = s >= 0
        out[np.flatnonzero(fg), s[fg]] = 1.0
        return out

    def flat(self) -> np.ndarray:
        if not self.states:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.states)

    def flat_pm1(self) -> np.ndarray:
        s = self.flat()
        out = -np.ones((s.shape[0], self.num_classes))
        fg = s >= 0
        out[np.flatnonzero(fg), s[fg]] = 1.0
        return out

    def count_changes(self, other: "LabelMatrix") -> int:
        return int(np.count_nonzero(self.flat() != other.flat()))

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return len(self.states) == len(other.states) and all(
            np.array_equal(a, b) for a, b in zip(self.states, other.states)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Importance weights v, one ``(n_k, C)`` block per bag, entries in [0, 1]."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=np.float64) for b in self.blocks)
        for k, b in enumerate(blocks):
            if b.ndim != 2:
                raise SpclError(f"bag #{k}: weight block must be 2-D")
            if not np.all(np.isfinite(b)) or np.any(b < 0.0) or np.any(b > 1.0):
                raise SpclError(f"bag #{k}: weights must lie in [0, 1]")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def zeros(cls, data: Dataset) -> "WeightMatrix":
        return cls(tuple(np.zeros((b.n, data.num_classes)) for b in data.bags))

    @classmethod
    def from_flat(cls, data: Dataset, flat: np.ndarray) -> "WeightMatrix":
        off = data.offsets
        return cls(tuple(flat[off[k]:off[k + 1]] for k in range(len(data))))

    def flat(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, 0))
        return np.vstack(self.blocks)

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return len(self.blocks) == len(other.blocks) and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DetectorSet:
    """C linear detectors stacked as ``W`` (C, d) and ``b`` (C,)."""

    W: np.ndarray
    b: np.ndarray
    degenerate: tuple = ()

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if W.ndim != 2 or W.shape[0] != b.shape[0] or W.shape[0] < 1:
            raise SpclError(f"detector shapes disagree: W {W.shape}, b {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise SpclError("non-finite detector parameters")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        deg = tuple(bool(x) for x in self.degenerate) or (False,) * W.shape[0]
        if len(deg) != W.shape[0]:
            raise SpclError("one degenerate flag per class required")
        object.__setattr__(self, "degenerate", deg)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.W.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        """``(n, C)`` matrix of w_c . x + b_c."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feat_dim:
            raise SpclError(f"feature dimension {X.shape[-1]} != detector dimension {self.feat_dim}")
        return X @ self.W.T + self.b

    def to_json(self) -> dict:
        return {
            "classes": [
                {"w": self.W[c].tolist(), "b": float(self.b[c])} for c in range(self.num_classes)
            ],
            "feat_dim": self.feat_dim,
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DetectorSet":
        classes = obj["classes"]
        W = np.array([c["w"] for c in classes], dtype=np.float64).reshape(len(classes), -1)
        if W.shape[1] != obj["feat_dim"]:
            raise SpclError("detector weight length disagrees with feat_dim")
        b = np.array([c["b"] for c in classes], dtype=np.float64)
        return cls(W, b, tuple(obj.get("degenerate", ())))

    def __eq__(self, other):
        if not isinstance(other, DetectorSet):
            return NotImplemented
        return (
            np.array_equal(self.W, other.W)
            and np.array_equal(self.b, other.b)
            and self.degenerate == other.degenerate
        )

    __hash__ = None


def score(h: Hypothesis, det: DetectorSet, c: int) -> float:
    feat = np.asarray(h.feat, dtype=np.float64)
    if feat.shape != (det.feat_dim,):
        raise SpclError(f"feature dimension {feat.shape} != detector dimension {det.feat_dim}")
    return float(feat @ det.W[c] + det.b[c])


def instance_truth(bag: ImageBag, iou_thresh: float = 0.5) -> np.ndarray:
    """Ground-truth state per hypothesis: class of the best-overlapping object
    if that overlap is at least ``iou_thresh``, background otherwise."""
    truth = np.full(bag.n, BACKGROUND, dtype=np.int64)
    if not bag.gt_objects:
        return truth
    gt_boxes = np.array([o.bbox.as_tuple() for o in bag.gt_objects])
    ov = iou_matrix(bag.boxes, gt_boxes)
    best = ov.argmax(axis=1)
    hit = ov[np.arange(bag.n), best] >= iou_thresh
    classes = np.array([o.cls for o in bag.gt_objects])
    truth[hit] = classes[best[hit]]
    return truth
