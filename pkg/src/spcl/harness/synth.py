"""Desk-scale synthetic corpus: boxes in a square canvas, features drawn from
per-class Gaussians (object hypotheses) or a broad background Gaussian."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..core import BBox, Dataset, ImageBag, SpclError, instance_truth, iou_matrix


@dataclass(frozen=True)
class SynthConfig:
    C: int = 4
    K: int = 120
    easy_fraction: float = 2 / 3
    n_per_bag: int = 30
    d: int = 16
    class_sep: float = 4.0
    noise_sigma: float = 1.0
    saliency_reliability: float = 0.8
    objects_per_hard_bag: int = 2
    seed: int = 0
    test_K: int = 40
    hyps_per_object: int = 8
    clutter_hyps: int = 0
    background_scale: float = 1.0
    mean_radius: float = 8.0
    image_size: float = 100.0

    def __post_init__(self):
        for name in ("C", "K", "n_per_bag", "d", "test_K", "hyps_per_object"):
            if getattr(self, name) < 1:
                raise SpclError(f"{name} must be positive")
        if self.clutter_hyps < 0:
            raise SpclError("clutter_hyps must be >= 0")
        for name in ("easy_fraction", "saliency_reliability"):
            if not 0 <= getattr(self, name) <= 1:
                raise SpclError(f"{name} must lie in [0, 1]")
        if self.class_sep <= 0 or self.noise_sigma <= 0 or self.background_scale <= 0:
            raise SpclError("class_sep, noise_sigma and background_scale must be positive")
        if self.objects_per_hard_bag < 2:
            raise SpclError("objects_per_hard_bag must be >= 2")
        if self.easy_fraction < 1 and self.objects_per_hard_bag > self.C:
            raise SpclError("objects_per_hard_bag cannot exceed the number of classes")
        if self.mean_radius < self.class_sep * math.sqrt((self.C - 1) / (2 * self.C)):
            raise SpclError("mean_radius too small for the requested class separation")
        if self.d < self.C + 1:
            raise SpclError("need d >= C + 1 to place the class means")
        # objects + one saliency distractor group must fit in a bag
        if self.objects_per_hard_bag * self.hyps_per_object + self.clutter_hyps > self.n_per_bag:
            raise SpclError("n_per_bag too small for the planted objects")

    def to_dict(self) -> dict:
        return asdict(self)


def class_means(C: int, d: int, sep: float, radius: float) -> np.ndarray:
    """Vertices of a regular simplex with edge ``sep``, lifted along one extra
    axis onto the sphere of the given radius around the origin (the
    background centre)."""
    mu = np.zeros((C, d))
    if C > 1:
        simplex = np.eye(C) - 1.0 / C
        mu[:, :C] = simplex * (sep / math.sqrt(2.0))
    r2 = float(np.sum(mu[0] ** 2))
    mu[:, C] = math.sqrt(radius * radius - r2)
    return mu


def _random_box(rng, size, lo=10.0, hi=60.0):
    w, h = rng.uniform(lo, hi, size=2)
    x0 = rng.uniform(0, size - w)
    y0 = rng.uniform(0, size - h)
    return np.array([x0, y0, x0 + w, y0 + h])


def _jitter(rng, box, size, scale=0.12):
    w, h = box[2] - box[0], box[3] - box[1]
    b = box + rng.normal(0.0, scale, size=4) * np.array([w, h, w, h])
    b = np.clip(b, 0.0, size)
    if b[2] - b[0] < 2.0:
        b[0], b[2] = box[0], box[2]
    if b[3] - b[1] < 2.0:
        b[1], b[3] = box[1], box[3]
    return b


def _place_apart(rng, existing, size, lo, hi, tries=100):
    for _ in range(tries):
        box = _random_box(rng, size, lo, hi)
        if not existing or iou_matrix(box[None], np.array(existing)).max() < 0.05:
            return box
    return box


def _make_bag(rng, cfg, bag_id, classes, means):
    size = cfg.image_size
    objects = []
    for _ in classes:
        objects.append(_place_apart(rng, objects, size, 20.0, 45.0))
    boxes = []
    for ob in objects:
        boxes.extend(_jitter(rng, ob, size) for _ in range(cfg.hyps_per_object))
    if rng.uniform() < cfg.saliency_reliability:
        sal = objects[int(rng.integers(len(objects)))]
    else:
        sal = _place_apart(rng, objects, size, 20.0, 45.0)
        boxes.extend(_jitter(rng, sal, size) for _ in range(cfg.clutter_hyps))
    while len(boxes) < cfg.n_per_bag:
        boxes.append(_random_box(rng, size))
    boxes = np.array(boxes)[rng.permutation(len(boxes))]

    gt = tuple((c, BBox(*ob)) for c, ob in zip(classes, objects))
    proto = ImageBag(bag_id, np.zeros((len(boxes), 1)), boxes, frozenset(classes), BBox(*sal), gt)
    truth = instance_truth(proto)
    feats = rng.normal(0.0, cfg.noise_sigma * cfg.background_scale, size=(len(boxes), cfg.d))
    fg = truth >= 0
    feats[fg] = means[truth[fg]] + rng.normal(0.0, cfg.noise_sigma, size=(int(fg.sum()), cfg.d))
    return ImageBag(bag_id, feats, boxes, frozenset(classes), BBox(*sal), gt), truth


def _make_split(rng, cfg, K, prefix, means):
    n_easy = int(round(cfg.easy_fraction * K))
    kinds = np.array([True] * n_easy + [False] * (K - n_easy))[rng.permutation(K)]
    bags, truths = [], []
    for k in range(K):
        if kinds[k]:
            classes = [int(rng.integers(cfg.C))]
        else:
            classes = sorted(int(c) for c in rng.choice(cfg.C, cfg.objects_per_hard_bag, replace=False))
        bag, truth = _make_bag(rng, cfg, f"{prefix}{k:04d}", classes, means)
        bags.append(bag)
        truths.append(truth)
    return Dataset(tuple(bags), cfg.C, cfg.d), truths


def generate_synthetic(cfg: SynthConfig = SynthConfig()):
    """Return ``(train, test, truth)`` where ``truth`` holds the per-hypothesis
    ground-truth states of both splits."""
    rng = np.random.default_rng(cfg.seed)
    means = class_means(cfg.C, cfg.d, cfg.class_sep, cfg.mean_radius)
    train, train_truth = _make_split(rng, cfg, cfg.K, "train", means)
    test, test_truth = _make_split(rng, cfg, cfg.test_K, "test", means)
    return train, test, {"train": train_truth, "test": test_truth}
