"""The outer alternation: detectors -> labels -> weights -> pace, repeated."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .core import BBox, Dataset, DetectorSet, ImageBag, LabelMatrix, SpclError, WeightMatrix
from .curriculum import CurriculumConfig, initialize, partition_easy_hard, random_initialize
from .labeler import MODES, update_labels
from .pacer import (PaceState, advance_pace, calibrate_lambda, class_losses, quota_target,
                    regularizer_value, update_weights)
from .wsvm import DegenerateClassWarning, SvmConfig, gram_matrix, train_one_vs_all, weighted_loss_sum

log = logging.getLogger(__name__)

ABLATIONS = frozenset({"no_diversity", "no_curriculum", "no_alternation", "basic_spcl"})
CONVERGENCE = ("labels_stable_and_full_quota", "max_iters_only")
# slack for the per-iteration "objective did not go up" checks
MONOTONE_TOL = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 20
    convergence: str = "labels_stable_and_full_quota"
    svm: SvmConfig = SvmConfig()
    pace_init: Optional[PaceState] = None
    curriculum: CurriculumConfig = CurriculumConfig()
    ablation: frozenset = frozenset()
    seed: int = 0
    labeler_mode: str = "corrected"
    warm_start: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ablation", frozenset(self.ablation))
        if self.max_iters < 1:
            raise SpclError("max_iters must be >= 1")
        if self.convergence not in CONVERGENCE:
            raise SpclError(f"unknown convergence rule {self.convergence!r}")
        if self.labeler_mode not in MODES:
            raise SpclError(f"unknown labeler mode {self.labeler_mode!r}")
        unknown = self.ablation - ABLATIONS
        if unknown:
            raise SpclError(f"unknown ablation(s): {sorted(unknown)}")


class Objective(NamedTuple):
    data_term: float
    reg_term: float
    total: float
    surrogate: float


@dataclass
class TrainState:
    iteration: int
    y: LabelMatrix
    v: WeightMatrix
    det: Optional[DetectorSet]
    pace: PaceState
    log: list = field(default_factory=list)


def evaluate_objective(data: Dataset, y: LabelMatrix, v: WeightMatrix, det: DetectorSet,
                       pace: PaceState, reg_tradeoff: float = 1.0) -> Objective:
    """Weighted hinge data term + self-paced regularizer.

    ``surrogate`` adds |w_c|^2 / (2 R) per class, i.e. the SVM objective
    divided by R, which is what the detector step actually minimises.
    """
    data_term = weighted_loss_sum(data, y, v, det)
    reg = 0.0
    for c in range(data.num_classes):
        reg += regularizer_value([blk[:, c] for blk in v.blocks], pace, c)
    total = data_term + reg
    surrogate = total + float(np.sum(det.W * det.W)) / (2.0 * reg_tradeoff)
    return Objective(data_term, reg, total, surrogate)


def _class_populations(data: Dataset) -> list:
    """Per class, the bag indices weakly labeled with it."""
    return [[k for k, bag in enumerate(data.bags) if c in bag.weak_labels]
            for c in range(data.num_classes)]


def _fit(data, y, v, svm, gram, warm):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateClassWarning)
        det, dual = train_one_vs_all(data, y, v, svm, gram, warm, return_dual=True)
    for w in caught:
        if issubclass(w.category, DegenerateClassWarning):
            log.warning("%s", w.message)
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return det, dual


def train(data: Dataset, cfg: TrainConfig = TrainConfig()) -> tuple[DetectorSet, TrainState]:
    if len(data) == 0:
        raise SpclError("cannot train on an empty dataset")
    easy_ids, _ = partition_easy_hard(data)
    easy = set(easy_ids)
    for c in range(data.num_classes):
        if not any(bag.id in easy and c in bag.weak_labels for bag in data.bags):
            log.warning("class %d has no easy bag", c + 1)

    abl = cfg.ablation
    pace = cfg.pace_init or PaceState.initial(data.num_classes)
    if pace.num_classes != data.num_classes:
        raise SpclError("pace_init has the wrong number of classes")
    if abl & {"no_diversity", "basic_spcl"}:
        pace = replace(pace, gamma_ratio=0.0, gammas=(0.0,) * data.num_classes)

    if "no_curriculum" in abl:
        y, v = random_initialize(data, cfg.seed)
    else:
        y, v = initialize(data, cfg.curriculum)
    state = TrainState(0, y, v, None, pace)

    R = cfg.svm.reg_tradeoff
    gram = gram_matrix(data.X)
    populations = _class_populations(data)
    off = data.offsets
    pop_masks = []
    for bags in populations:
        m = np.zeros(data.num_hypotheses, dtype=bool)
        for k in bags:
            m[off[k]:off[k + 1]] = True
        pop_masks.append(m)

    warm = None
    for it in range(1, cfg.max_iters + 1):
        det, dual = _fit(data, state.y, state.v, cfg.svm, gram, warm)
        warm = dual if cfg.warm_start else None
        state.det = det
        state.iteration = it
        if "no_alternation" in abl:
            obj = evaluate_objective(data, state.y, state.v, det, state.pace, R)
            state.log.append(_record(it, obj, obj, obj, obj, obj, 0, state.pace, state.v,
                                     state.y, pop_masks, det, None))
            break

        obj_y0 = evaluate_objective(data, state.y, state.v, det, state.pace, R)
        y_new = update_labels(data, det, state.v, cfg.labeler_mode)
        obj_y1 = evaluate_objective(data, y_new, state.v, det, state.pace, R)

        L = class_losses(data, y_new, det)
        lams, gams, targets = [], [], []
        for c, bags in enumerate(populations):
            if not bags:
                lams.append(state.pace.lambdas[c])
                gams.append(state.pace.gammas[c])
                targets.append(0)
                continue
            segs = [L[off[k]:off[k + 1], c] for k in bags]
            counted = [y_new.states[k] == c for k in bags]
            target = quota_target(state.pace.quota_fraction, int(pop_masks[c].sum()))
            target = min(target, int(sum(m.sum() for m in counted)))
            lam, gam = calibrate_lambda(segs, target, state.pace.gamma_ratio, counted)
            targets.append(target)
            lams.append(lam)
            gams.append(gam)
        pace_t = replace(state.pace, lambdas=tuple(lams), gammas=tuple(gams))

        obj_v0 = evaluate_objective(data, y_new, state.v, det, pace_t, R)
        v_new = update_weights(data, y_new, det, pace_t)
        obj_v1 = evaluate_objective(data, y_new, v_new, det, pace_t, R)

        changes = y_new.count_changes(state.y)
        rec = _record(it, obj_v1, obj_y0, obj_y1, obj_v0, obj_v1, changes, pace_t, v_new,
                      y_new, pop_masks, det, targets)
        state.log.append(rec)
        log.info("iter %d: total=%.4f changes=%d quota=%.4f", it, obj_v1.total, changes,
                 pace_t.quota_fraction)
        if not (rec["y_update_monotone"] and rec["v_update_monotone"]):
            log.warning("iter %d: objective increased within a sweep", it)

        state.y, state.v = y_new, v_new
        converged = changes == 0 and pace_t.quota_fraction >= 1.0
        state.pace = advance_pace(pace_t)
        if converged and cfg.convergence == "labels_stable_and_full_quota":
            break
    return state.det, state


def _record(it, obj, y0, y1, v0, v1, changes, pace, v, y, pop_masks, det, targets):
    V = v.flat()
    S = y.flat()
    per_class = []
    for c in range(pace.num_classes):
        per_class.append({
            "class": c + 1,
            "lambda": pace.lambdas[c],
            "gamma": pace.gammas[c],
            "quota": pace.quota_fraction,
            "population": int(pop_masks[c].sum()),
            "target": None if targets is None else int(targets[c]),
            "selected_mass": float(V[pop_masks[c] & (S == c), c].sum()) if V.size else 0.0,
            "positives": int(np.count_nonzero(pop_masks[c] & (S == c))),
            "total_mass": float(V[:, c].sum()) if V.size else 0.0,
            "degenerate": bool(det.degenerate[c]),
        })
    return {
        "iter": it,
        "data_term": obj.data_term,
        "reg_term": obj.reg_term,
        "total": obj.total,
        "surrogate": obj.surrogate,
        "label_changes": int(changes),
        "quota": pace.quota_fraction,
        "objective_before_y": y0.total,
        "objective_after_y": y1.total,
        "data_term_before_y": y0.data_term,
        "data_term_after_y": y1.data_term,
        "objective_before_v": v0.total,
        "objective_after_v": v1.total,
        "y_update_monotone": bool(y1.total <= y0.total + MONOTONE_TOL * max(1.0, abs(y0.total))),
        "v_update_monotone": bool(v1.total <= v0.total + MONOTONE_TOL * max(1.0, abs(v0.total))),
        "per_class": per_class,
    }


def check_run_log(records: list) -> list:
    """Return the iterations whose y- or v-update increased the objective."""
    return [r["iter"] for r in records
            if r["objective_after_y"] > r["objective_before_y"] + MONOTONE_TOL * max(1.0, abs(r["objective_before_y"]))
            or r["objective_after_v"] > r["objective_before_v"] + MONOTONE_TOL * max(1.0, abs(r["objective_before_v"]))]


def detect(test_bags, det: DetectorSet, nms_iou: float = 0.3,
           score_threshold: Optional[float] = 0.0) -> list:
    """Per bag, the NMS survivors as ``(class, BBox, score)`` sorted by score
    (descending).  ``score_threshold=None`` keeps every score."""
    out = []
    for bag in test_bags:
        S = det.scores(bag.feats)
        found = []
        for c in range(det.num_classes):
            s = S[:, c]
            idx = np.arange(bag.n) if score_threshold is None else np.flatnonzero(s > score_threshold)
            if idx.size == 0:
                continue
            keep = kernels.nms(np.ascontiguousarray(bag.boxes[idx]), np.ascontiguousarray(s[idx]),
                               float(nms_iou))
            for j in keep:
                i = idx[j]
                found.append((c, BBox(*bag.boxes[i]), float(s[i])))
        found.sort(key=lambda t: (-t[2], t[0], t[1].as_tuple()))
        out.append(found)
    return out


def localize(data: Dataset, det: DetectorSet) -> dict:
    """Top-scored box per (bag id, weak label)."""
    out = {}
    for bag in data.bags:
        S = det.scores(bag.feats)
        for c in sorted(bag.weak_labels):
            out[(bag.id, c)] = BBox(*bag.boxes[int(np.argmax(S[:, c]))])
    return out
