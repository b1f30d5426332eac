"""Pseudo-label update for one bag under the three label constraints:

* every entry is +1/-1 (implicit in the state encoding),
* a hypothesis is positive for at most one class,
* each weak label of the bag has at least one positive hypothesis.

Two modes:

``literal``
    score-based assignment followed by the one-flip repair with the
    repair costs exactly as in the published pseudo-code.
``corrected`` (default)
    per-hypothesis cheapest state under the weighted hinge objective, then
    the cheapest set of distinct "witness" hypotheses for the weak labels
    (a small assignment problem).  This attains the global optimum.
"""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import BACKGROUND, Dataset, DetectorSet, ImageBag, LabelMatrix, SpclError, WeightMatrix
from .wsvm import hinge_loss

MODES = ("literal", "corrected")


def state_costs(scores: np.ndarray, v_block: np.ndarray) -> np.ndarray:
    """``(n, C+1)`` objective contribution of each hypothesis per state.

    Column 0 is background, column ``c + 1`` is "positive for class c".
    """
    neg = v_block * hinge_loss(-1.0, scores)
    pos = v_block * hinge_loss(1.0, scores)
    base = neg.sum(axis=1)
    return np.column_stack([base, base[:, None] - neg + pos])


def bag_label_objective(bag: ImageBag, states, det: DetectorSet, v_block) -> float:
    """Weighted hinge objective of one bag's labeling."""
    states = np.asarray(states, dtype=np.int64)
    S = det.scores(bag.feats)
    Y = -np.ones_like(S)
    fg = states >= 0
    Y[np.flatnonzero(fg), states[fg]] = 1.0
    return float(np.sum(np.asarray(v_block) * hinge_loss(Y, S)))


def _score_states(S: np.ndarray) -> np.ndarray:
    best = S.argmax(axis=1)  # first maximum = lowest class index on ties
    return np.where((S < 0).all(axis=1), BACKGROUND, best)


def _sole_witnesses(states, weak_labels):
    """Hypotheses that are the only positive for some weak label."""
    out = set()
    for c in weak_labels:
        idx = np.flatnonzero(states == c)
        if idx.size == 1:
            out.add(int(idx[0]))
    return out


def _assign_literal(S, V, weak_labels):
    states = _score_states(S)
    loss_pos = hinge_loss(1.0, S)
    for c in sorted(weak_labels):
        if np.any(states == c):
            continue
        locked = _sole_witnesses(states, weak_labels)
        delta = V[:, c] * loss_pos[:, c]
        fg = np.flatnonzero(states >= 0)
        delta[fg] += V[fg, states[fg]] * loss_pos[fg, states[fg]]
        if locked:
            delta[list(locked)] = np.inf
        if not np.isfinite(delta).any():
            raise SpclError("not enough hypotheses to cover every weak label")
        states[int(np.argmin(delta))] = c
    return states


def _assign_corrected(S, V, weak_labels):
    cost = state_costs(S, V)
    preferred = _score_states(S) + 1
    best = cost.min(axis=1)
    # keep the score-based choice whenever it is already optimal
    pref_cost = cost[np.arange(len(best)), preferred]
    cols = np.where(pref_cost <= best, preferred, cost.argmin(axis=1))
    states = cols - 1
    labels = sorted(weak_labels)
    if not labels:
        return states
    delta = cost[:, [c + 1 for c in labels]] - cost[np.arange(len(states)), cols][:, None]
    if all(np.any(states == c) for c in labels):
        return states
    # cheapest distinct witness per weak label; everyone else keeps its best state
    rows, hyps = linear_sum_assignment(delta.T)
    for r, i in zip(rows, hyps):
        states[i] = labels[r]
    return states


def assign_labels_one_bag(bag: ImageBag, det: DetectorSet, v_block, mode: str = "corrected") -> np.ndarray:
    """State vector (background = -1, else 0-based class) for one bag."""
    if mode not in MODES:
        raise SpclError(f"unknown labeler mode {mode!r}")
    V = np.asarray(v_block, dtype=np.float64)
    if V.shape != (bag.n, det.num_classes):
        raise SpclError(f"bag {bag.id}: weight block shape {V.shape}")
    if np.any(V < 0) or np.any(V > 1):
        raise SpclError(f"bag {bag.id}: weights must lie in [0, 1]")
    if len(bag.weak_labels) > bag.n:
        raise SpclError(f"bag {bag.id}: {len(bag.weak_labels)} weak labels but {bag.n} hypotheses")
    S = det.scores(bag.feats)
    if mode == "literal":
        return _assign_literal(S, V, bag.weak_labels)
    return _assign_corrected(S, V, bag.weak_labels)


def update_labels(data: Dataset, det: DetectorSet, v: WeightMatrix, mode: str = "corrected") -> LabelMatrix:
    states = [assign_labels_one_bag(bag, det, v.blocks[k], mode) for k, bag in enumerate(data.bags)]
    return LabelMatrix.for_dataset(data, states)


def enumerate_optimal_labeling(bag: ImageBag, det: DetectorSet, v_block) -> tuple[np.ndarray, float]:
    """Brute-force global minimiser over all feasible labelings of one bag.

    Labelings are visited in lexicographic order of (state + 1) per
    hypothesis, so background sorts first; the first minimum wins.
    """
    C = det.num_classes
    if bag.n > 12 or C > 4:
        raise SpclError(f"enumeration limited to n <= 12 and C <= 4 (got n={bag.n}, C={C})")
    V = np.asarray(v_block, dtype=np.float64)
    S = det.scores(bag.feats)
    weak = sorted(bag.weak_labels)
    best_states, best_val = None, np.inf
    for combo in itertools.product(range(C + 1), repeat=bag.n):
        states = np.array(combo) - 1
        if any(not np.any(states == c) for c in weak):
            continue
        val = 0.0
        for i in range(bag.n):
            for c in range(C):
                yic = 1.0 if states[i] == c else -1.0
                val += V[i, c] * max(0.0, 1.0 - yic * S[i, c])
        if val < best_val:
            best_states, best_val = states, val
    if best_states is None:
        raise SpclError(f"bag {bag.id}: no feasible labeling")
    return best_states, best_val
