"""Self-paced weights: the easiness + diversity regularizer, its closed-form
minimiser per (bag, class), and the quota-driven pace schedule."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .core import Dataset, DetectorSet, LabelMatrix, SpclError, WeightMatrix
from .wsvm import hinge_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PaceState:
    """Per-class pace (lambda: easiness, gamma: diversity) plus the quota schedule."""

    lambdas: tuple
    gammas: tuple
    quota_fraction: float = 0.02
    growth: float = 1.5
    gamma_ratio: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "gammas", tuple(float(x) for x in self.gammas))
        if len(self.lambdas) != len(self.gammas):
            raise SpclError("lambdas and gammas must have one entry per class")
        if any(not lam > 0 for lam in self.lambdas):
            raise SpclError("lambda must be > 0")
        if any(not g >= 0 for g in self.gammas):
            raise SpclError("gamma must be >= 0")
        if not 0 < self.quota_fraction <= 1:
            raise SpclError("quota_fraction must lie in (0, 1]")
        if self.growth < 1:
            raise SpclError("growth must be >= 1")
        if self.gamma_ratio < 0:
            raise SpclError("gamma_ratio must be >= 0")

    @classmethod
    def initial(cls, num_classes: int, quota_fraction: float = 0.02, growth: float = 1.5,
                gamma_ratio: float = 1.0, lam: float = 1.0) -> "PaceState":
        return cls((lam,) * num_classes, (gamma_ratio * lam,) * num_classes,
                   quota_fraction, growth, gamma_ratio)

    @property
    def num_classes(self) -> int:
        return len(self.lambdas)


def regularizer_value(v_block: Sequence, pace: PaceState, c: int) -> float:
    """-lambda_c * sum(v) - gamma_c * sum_k sqrt(sum_i v) for one class.

    ``v_block`` holds one weight vector per bag.
    """
    lam, gam = pace.lambdas[c], pace.gammas[c]
    sums = np.array([float(np.sum(vk)) for vk in v_block])
    return float(-lam * sums.sum() - gam * np.sqrt(sums).sum())


def bag_objective(v, losses, lam: float, gam: float) -> float:
    """Value of sum v*l - lam*sum v - gam*sqrt(sum v) for one bag."""
    v = np.asarray(v, dtype=np.float64)
    s = float(v.sum())
    return float(v @ np.asarray(losses, dtype=np.float64)) - lam * s - gam * math.sqrt(max(s, 0.0))


def solve_weights_one_bag(losses, lam: float, gam: float) -> np.ndarray:
    """Global minimiser over [0, 1]^n of the per-bag self-paced objective.

    Walk the losses in ascending order, giving weight 1 while
    ``l_i < lam + gam / (2 sqrt(i))``; the first failing tie group shares
    ``((gam / (2 (l_i - lam)))^2 - (i - 1)) / m`` (clamped to [0, 1]), the
    rest get 0.  Weights come back in the caller's order.
    """
    losses = np.ascontiguousarray(losses, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(losses)):
        raise SpclError("losses must be finite")
    if np.any(losses < 0):
        raise SpclError("losses must be non-negative")
    if not lam > 0 or not gam >= 0:
        raise SpclError("need lambda > 0 and gamma >= 0")
    offsets = np.array([0, losses.shape[0]], dtype=np.int64)
    return kernels.spl_weights(losses, offsets, float(lam), float(gam))


def class_losses(data: Dataset, y: LabelMatrix, det: DetectorSet) -> np.ndarray:
    """``(N, C)`` hinge losses of every hypothesis under the current labels."""
    return hinge_loss(y.flat_pm1(), det.scores(data.X))


def _weights_for(losses, offsets, lam, gam):
    return kernels.spl_weights(np.ascontiguousarray(losses), offsets, float(lam), float(gam))


def update_weights(data: Dataset, y: LabelMatrix, det: DetectorSet, pace: PaceState) -> WeightMatrix:
    """Solve every (bag, class) weight subproblem and assemble v."""
    if pace.num_classes != data.num_classes:
        raise SpclError("pace state and dataset disagree on the number of classes")
    L = class_losses(data, y, det)
    V = np.zeros_like(L)
    for c in range(data.num_classes):
        V[:, c] = _weights_for(L[:, c], data.offsets, pace.lambdas[c], pace.gammas[c])
    return WeightMatrix.from_flat(data, V)


def quota_target(quota_fraction: float, population: int) -> int:
    """ceil(quota * population), ignoring float noise in the product."""
    return max(1, math.ceil(round(quota_fraction * population, 9)))


def calibrate_lambda(losses_for_class: Sequence, target_count: int, gamma_ratio: float = 1.0,
                     counted: Optional[Sequence] = None, max_steps: int = 200) -> tuple[float, float]:
    """Find the smallest lambda (with gamma = gamma_ratio * lambda) whose
    optimal weights carry at least ``target_count`` total mass.

    ``losses_for_class`` holds one loss vector per bag.  When ``counted``
    (one boolean mask per bag) is given, every hypothesis still takes part
    in the per-bag solve but only the masked ones count toward the selected
    mass.  Each weight is non-decreasing in lambda, so plain bisection
    applies.  Zero-loss hypotheses are selected by every lambda > 0; if they
    alone exceed the target, the smallest bracketed lambda is returned.
    """
    if target_count < 1:
        raise SpclError("target_count must be >= 1")
    segs = [np.asarray(l, dtype=np.float64).reshape(-1) for l in losses_for_class]
    flat = np.ascontiguousarray(np.concatenate(segs)) if segs else np.zeros(0)
    if flat.size == 0:
        raise SpclError("no hypotheses to calibrate on")
    if np.any(flat < 0) or not np.all(np.isfinite(flat)):
        raise SpclError("losses must be finite and non-negative")
    offsets = np.concatenate([[0], np.cumsum([s.size for s in segs])]).astype(np.int64)
    if counted is None:
        mask = np.ones(flat.size, dtype=bool)
    else:
        mask = np.concatenate([np.asarray(m, dtype=bool).reshape(-1) for m in counted])
        if mask.shape != flat.shape:
            raise SpclError("counted masks must match the loss vectors")
    n = int(mask.sum())
    if n == 0:
        raise SpclError("no counted hypotheses to calibrate on")
    if target_count > n:
        log.warning("target %d exceeds the %d available hypotheses; clamped", target_count, n)
        target_count = n

    def mass(lam):
        return float(_weights_for(flat, offsets, lam, gamma_ratio * lam)[mask].sum())

    lo, hi = 0.0, float(flat.max()) + 1.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if mass(mid) >= target_count:
            hi = mid
        else:
            lo = mid
    got = mass(hi)
    if got > target_count + 1:
        log.info("selected mass %.3f overshoots target %d (%d zero-loss hypotheses)",
                    got, target_count, int(np.count_nonzero(flat[mask] == 0)))
    return hi, gamma_ratio * hi


def advance_pace(pace: PaceState) -> PaceState:
    return replace(pace, quota_fraction=min(1.0, pace.quota_fraction * pace.growth))
