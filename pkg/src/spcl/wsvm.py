"""Weighted one-vs-all linear SVM (the detector update).

Each class solves

    min_{w,b}  1/2 |w|^2 + R * sum_i v_i * hinge(y_i, w.x_i + b)

with an unpenalised bias, by SMO on the dual.  Samples with v_i = 0 are
dropped before the solve, so they cannot influence the result.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import Dataset, DetectorSet, LabelMatrix, SpclError, WeightMatrix

log = logging.getLogger(__name__)


class DegenerateClassWarning(UserWarning):
    """A class had no positive (or no negative) weight; its detector is a constant."""


@dataclass(frozen=True)
class SvmConfig:
    reg_tradeoff: float = 1.0
    max_epochs: int = 1000
    tol: float = 1e-6
    shrinking: bool = True

    def __post_init__(self):
        if not (self.reg_tradeoff > 0 and self.max_epochs > 0 and self.tol > 0):
            raise SpclError(f"SvmConfig values must be positive: {self}")


def hinge_loss(y, s):
    """max(0, 1 - y*s); works elementwise on arrays."""
    out = np.maximum(0.0, 1.0 - np.multiply(y, s))
    return float(out) if np.ndim(out) == 0 else out


def svm_objective(X, y, costs, w, b) -> float:
    """Primal objective 1/2 |w|^2 + sum costs * hinge."""
    margins = hinge_loss(y, X @ w + b)
    return 0.5 * float(w @ w) + float(np.dot(costs, margins))


def gram_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    return np.ascontiguousarray(X @ X.T)


def _warm_start(gram, idx, y, cost, alpha0):
    """Clip a previous dual solution into the new box and rebalance it so
    that y'a = 0 holds again; returns ``(alpha, gradient)``."""
    a = np.clip(alpha0, 0.0, cost)
    pos = y > 0
    sp, sn = a[pos].sum(), a[~pos].sum()
    if sp > sn:
        a[pos] *= sn / sp
    elif sn > sp:
        a[~pos] *= sp / sn
    sv = np.flatnonzero(a > 0)
    G = -np.ones(idx.size)
    if sv.size:
        G += y * (gram[np.ix_(idx, idx[sv])] @ (a[sv] * y[sv]))
    return a, G


def solve_weighted_svm(X, y, costs, cfg: SvmConfig = SvmConfig(), gram=None, alpha0=None):
    """Like :func:`fit_weighted_svm` but also returns the full-length dual
    vector, and accepts one as a warm start (entries whose cost is now zero
    or whose label flipped should already be zeroed by the caller)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise SpclError("non-finite features")
    if np.any(costs < 0) or not np.all(np.isfinite(costs)):
        raise SpclError("sample costs must be finite and non-negative")
    if not np.all((y == 1) | (y == -1)):
        raise SpclError("labels must be -1 or +1")
    n, d = X.shape
    dual = np.zeros(n)
    keep = np.flatnonzero(costs > 0)
    if not np.any(y[keep] > 0):
        return np.zeros(d), -1.0, True, dual
    if not np.any(y[keep] < 0):
        return np.zeros(d), 1.0, True, dual
    if gram is None:
        gram = gram_matrix(X[keep])
        idx = np.arange(keep.size, dtype=np.int64)
    else:
        idx = keep.astype(np.int64)
    yk = np.ascontiguousarray(y[keep])
    ck = np.ascontiguousarray(costs[keep])
    if alpha0 is None:
        a0, G0 = np.zeros(keep.size), -np.ones(keep.size)
    else:
        a0, G0 = _warm_start(gram, idx, yk, ck, np.asarray(alpha0, dtype=np.float64)[keep])
    max_iter = cfg.max_epochs * keep.size
    alpha, b, iters = kernels.smo(gram, idx, yk, ck, cfg.tol, max_iter, a0, G0, cfg.shrinking)
    if iters >= max_iter:
        log.warning("SMO hit the iteration cap (%d) before reaching tol=%g", max_iter, cfg.tol)
    w = (alpha * yk) @ X[keep]
    dual[keep] = alpha
    return w, float(b), False, dual


def fit_weighted_svm(X, y, costs, cfg: SvmConfig = SvmConfig(), gram=None):
    """Solve one binary problem with per-sample misclassification costs.

    ``gram`` may carry a precomputed ``X @ X.T`` (the trainer reuses one
    across classes and iterations).  Returns ``(w, b, degenerate)``.  With
    no positive (negative) cost mass the problem has no meaningful separator
    and the constant detector ``w = 0, b = -1`` (``b = +1``) is returned
    with ``degenerate=True``.
    """
    w, b, deg, _ = solve_weighted_svm(X, y, costs, cfg, gram)
    return w, b, deg


def train_one_vs_all(data: Dataset, y: LabelMatrix, v: WeightMatrix, cfg: SvmConfig = SvmConfig(),
                     gram=None, warm=None, return_dual=False):
    """One weighted binary SVM per class, cost R * v_{i,c} per hypothesis.

    ``warm`` is an optional ``(labels_pm1, duals)`` pair from a previous call
    (both ``(N, C)``); duals of entries whose label changed are dropped before
    warm-starting.  With ``return_dual`` the result is ``(det, (Y, duals))``.
    """
    X = data.X
    Y = y.flat_pm1()
    V = v.flat()
    if V.shape != Y.shape:
        raise SpclError(f"weights {V.shape} and labels {Y.shape} disagree")
    if gram is None:
        gram = gram_matrix(X)
    W = np.zeros((data.num_classes, data.feat_dim))
    b = np.zeros(data.num_classes)
    duals = np.zeros(Y.shape)
    degenerate = []
    for c in range(data.num_classes):
        a0 = None
        if warm is not None:
            Y0, A0 = warm
            a0 = np.where(Y0[:, c] == Y[:, c], A0[:, c], 0.0)
        W[c], b[c], deg, duals[:, c] = solve_weighted_svm(
            X, Y[:, c], cfg.reg_tradeoff * V[:, c], cfg, gram, a0)
        if deg:
            warnings.warn(
                f"class {c + 1}: no positive or no negative weight, constant detector used",
                DegenerateClassWarning,
                stacklevel=2,
            )
        degenerate.append(deg)
    det = DetectorSet(W, b, tuple(degenerate))
    return (det, (Y, duals)) if return_dual else det


def weighted_loss_sum(data: Dataset, y: LabelMatrix, v: WeightMatrix, det: DetectorSet) -> float:
    """sum_k sum_i sum_c v * hinge(y, w_c.x + b_c)."""
    if data.num_hypotheses == 0:
        return 0.0
    S = det.scores(data.X)
    return float(np.sum(v.flat() * hinge_loss(y.flat_pm1(), S)))
