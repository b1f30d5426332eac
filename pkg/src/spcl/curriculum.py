"""Easy/hard split and saliency-seeded initial labels and weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BACKGROUND, Dataset, LabelMatrix, SpclError, WeightMatrix, iou_matrix


@dataclass(frozen=True)
class CurriculumConfig:
    tau_pos: float = 0.5
    tau_neg: float = 0.3
    literal_init: bool = False

    def __post_init__(self):
        if not (0 < self.tau_pos <= 1 and 0 <= self.tau_neg < 1 and self.tau_neg < self.tau_pos):
            raise SpclError(f"need 0 <= tau_neg < tau_pos <= 1, got {self}")


def partition_easy_hard(data: Dataset) -> tuple[list, list]:
    """Bags with a single weak label are easy, the rest hard."""
    easy, hard = [], []
    for bag in data.bags:
        (easy if len(bag.weak_labels) == 1 else hard).append(bag.id)
    return easy, hard


def _saliency_overlap(bag):
    if bag.saliency_box is None:
        return None
    return iou_matrix(bag.boxes, np.array([bag.saliency_box.as_tuple()]))[:, 0]


def _force_witnesses(bag, states, ov):
    """Make one hypothesis positive per uncovered weak label, best saliency
    overlap first (largest box when there is no saliency box)."""
    if ov is not None:
        rank = ov
    else:
        rank = (bag.boxes[:, 2] - bag.boxes[:, 0]) * (bag.boxes[:, 3] - bag.boxes[:, 1])
    order = np.argsort(-rank, kind="mergesort")
    for c in sorted(bag.weak_labels):
        if np.any(states == c):
            continue
        free = [i for i in order if states[i] == BACKGROUND]
        if not free:
            raise SpclError(f"bag {bag.id}: cannot give every weak label a positive hypothesis")
        states[free[0]] = c
    return states


def initialize(data: Dataset, cfg: CurriculumConfig = CurriculumConfig()) -> tuple[LabelMatrix, WeightMatrix]:
    """Initial (y, v).

    Easy bags: saliency overlap >= tau_pos -> positive with weight = overlap;
    overlap <= tau_neg -> background with weight 1; in between -> weight 0.
    With ``literal_init`` every hypothesis with non-zero overlap is a
    positive.  Hard bags start at weight 0 with one forced positive per
    weak label.
    """
    C = data.num_classes
    states, weights = [], []
    for bag in data.bags:
        if not bag.weak_labels:
            raise SpclError(f"bag {bag.id}: training bags need at least one weak label")
        s = np.full(bag.n, BACKGROUND, dtype=np.int64)
        w = np.zeros((bag.n, C))
        ov = _saliency_overlap(bag)
        if len(bag.weak_labels) == 1:
            if ov is None:
                raise SpclError(f"bag {bag.id}: easy bag without a saliency box")
            (c,) = bag.weak_labels
            if cfg.literal_init:
                pos, neg = ov > 0.0, ov <= 0.0
            else:
                pos, neg = ov >= cfg.tau_pos, ov <= cfg.tau_neg
            s[pos] = c
            w[pos] = ov[pos, None]
            w[neg] = 1.0
            if not pos.any():
                s = _force_witnesses(bag, s, ov)
                i = int(np.flatnonzero(s == c)[0])
                w[i] = ov[i]
        else:
            s = _force_witnesses(bag, s, ov)
        states.append(s)
        weights.append(w)
    return LabelMatrix.for_dataset(data, states), WeightMatrix(tuple(weights))


def random_initialize(data: Dataset, seed: int) -> tuple[LabelMatrix, WeightMatrix]:
    """Curriculum-free start: one uniformly random positive per weak label in
    every bag, everything else background, all weights 1."""
    rng = np.random.default_rng(seed)
    states, weights = [], []
    for bag in data.bags:
        if len(bag.weak_labels) > bag.n:
            raise SpclError(f"bag {bag.id}: more weak labels than hypotheses")
        s = np.full(bag.n, BACKGROUND, dtype=np.int64)
        picks = rng.choice(bag.n, size=len(bag.weak_labels), replace=False)
        for c, i in zip(sorted(bag.weak_labels), picks):
            s[i] = c
        states.append(s)
        weights.append(np.ones((bag.n, data.num_classes)))
    return LabelMatrix.for_dataset(data, states), WeightMatrix(tuple(weights))
