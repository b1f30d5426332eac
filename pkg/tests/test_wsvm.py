import warnings

import numpy as np
import pytest

from conftest import make_bag, make_dataset, random_detector
from oracles import hinge, svm_primal, svm_value
from spcl import (DegenerateClassWarning, DetectorSet, LabelMatrix, SpclError, SvmConfig, WeightMatrix,
                  hinge_loss, train_one_vs_all, weighted_loss_sum)
from spcl.wsvm import fit_weighted_svm, solve_weighted_svm


@pytest.mark.parametrize("y,s,expected", [(1, 1, 0.0), (1, 0.5, 0.5), (-1, 0.5, 1.5), (-1, -3, 0.0)])
def test_hinge_examples(y, s, expected):
    assert hinge_loss(y, s) == expected


def two_class_corpus():
    # one bag per point; class 0 near (+3, 0), class 1 near (-3, 0)
    pts = [([3.0, 0.5], 0), ([3.5, -0.5], 0), ([-3.0, 0.5], 1), ([-3.5, -0.5], 1)]
    bags = [make_bag(f"b{i}", [p], weak=(c,)) for i, (p, c) in enumerate(pts)]
    data = make_dataset(bags, 2)
    y = LabelMatrix.for_dataset(data, [[c] for _, c in pts])
    v = WeightMatrix(tuple(np.ones((1, 2)) for _ in pts))
    return data, y, v


def test_separable_two_class_reaches_zero_hinge():
    data, y, v = two_class_corpus()
    cfg = SvmConfig()
    det = train_one_vs_all(data, y, v, cfg)
    assert weighted_loss_sum(data, y, v, det) < cfg.tol
    assert not any(det.degenerate)


def random_problem(seed, n=40, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.where(X @ rng.normal(size=d) + 0.7 * rng.normal(size=n) > 0, 1.0, -1.0)
    costs = rng.uniform(0.0, 1.0, n)
    costs[rng.uniform(size=n) < 0.2] = 0.0
    return X, y, costs


@pytest.mark.parametrize("seed", range(8))
def test_matches_convex_oracle(seed):
    X, y, costs = random_problem(seed)
    w, b, deg = fit_weighted_svm(X, y, costs, SvmConfig(tol=1e-8))
    assert not deg
    _, _, ref = svm_primal(X, y, costs)
    assert svm_value(X, y, costs, w, b) == pytest.approx(ref, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_zero_weight_samples_have_no_influence(seed):
    X, y, costs = random_problem(seed)
    rng = np.random.default_rng(100 + seed)
    extra = rng.integers(0, len(y), 6)
    X2 = np.vstack([X, X[extra], rng.normal(size=(4, X.shape[1])) * 10])
    y2 = np.concatenate([y, -y[extra], np.ones(4)])
    c2 = np.concatenate([costs, np.zeros(10)])
    w1, b1, _ = fit_weighted_svm(X, y, costs)
    w2, b2, _ = fit_weighted_svm(X2, y2, c2)
    np.testing.assert_allclose(w2, w1, atol=1e-9)
    assert b2 == pytest.approx(b1, abs=1e-9)


def test_zero_weight_duplicate_in_dataset():
    data, y, v = two_class_corpus()
    det1 = train_one_vs_all(data, y, v)
    dup = make_bag("dup", data.bags[0].feats, weak=(0,))
    data2 = make_dataset(list(data.bags) + [dup], 2)
    y2 = LabelMatrix.for_dataset(data2, list(y.states) + [[0]])
    v2 = WeightMatrix(v.blocks + (np.zeros((1, 2)),))
    det2 = train_one_vs_all(data2, y2, v2)
    np.testing.assert_allclose(det2.W, det1.W, atol=1e-9)
    np.testing.assert_allclose(det2.b, det1.b, atol=1e-9)


def test_weight_equals_cost_rescaling():
    rng = np.random.default_rng(7)
    bags = [make_bag(f"b{k}", rng.normal(size=(5, 3)) + (2.0 if k % 2 else -2.0), weak=(k % 2,))
            for k in range(6)]
    data = make_dataset(bags, 2)
    y = LabelMatrix.for_dataset(data, [[k % 2] + [-1] * 4 for k in range(6)])
    V = rng.choice([0.5, 1.0], size=(30, 2))
    v = WeightMatrix.from_flat(data, V)
    R = 2.0
    cfg = SvmConfig(reg_tradeoff=R, tol=1e-8)
    det = train_one_vs_all(data, y, v, cfg)
    Y = y.flat_pm1()
    for c in range(2):
        w, b, _ = fit_weighted_svm(data.X, Y[:, c], R * V[:, c], SvmConfig(tol=1e-8))
        got = svm_value(data.X, Y[:, c], R * V[:, c], det.W[c], det.b[c])
        ref = svm_value(data.X, Y[:, c], R * V[:, c], w, b)
        assert got == pytest.approx(ref, abs=1e-8)


def test_deterministic_bitwise():
    X, y, costs = random_problem(3, n=80)
    a = fit_weighted_svm(X, y, costs)
    b = fit_weighted_svm(X, y, costs)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_warm_start_matches_cold_start():
    X, y, costs = random_problem(4, n=80)
    cfg = SvmConfig(tol=1e-9)
    w0, b0, _, dual = solve_weighted_svm(X, y, costs, cfg)
    costs2 = np.clip(costs * 1.3, 0, 1)
    w_cold, b_cold, _, _ = solve_weighted_svm(X, y, costs2, cfg)
    w_warm, b_warm, _, _ = solve_weighted_svm(X, y, costs2, cfg, alpha0=dual)
    assert svm_value(X, y, costs2, w_warm, b_warm) == pytest.approx(
        svm_value(X, y, costs2, w_cold, b_cold), abs=1e-7)


def test_class_permutation_permutes_detectors():
    rng = np.random.default_rng(2)
    bags = [make_bag(f"b{k}", rng.normal(size=(4, 3)) + 2 * np.eye(3)[k % 3], weak=(k % 3,))
            for k in range(9)]
    data = make_dataset(bags, 3)
    states = [[k % 3, -1, -1, -1] for k in range(9)]
    y = LabelMatrix.for_dataset(data, states)
    V = rng.uniform(size=(36, 3))
    det = train_one_vs_all(data, y, WeightMatrix.from_flat(data, V))
    perm = np.array([2, 0, 1])
    inv = np.argsort(perm)
    pbags = [make_bag(b.id, b.feats, weak=(int(inv[k % 3]),)) for k, b in enumerate(bags)]
    pdata = make_dataset(pbags, 3)
    py = LabelMatrix.for_dataset(pdata, [[int(inv[s[0]]), -1, -1, -1] for s in states])
    pdet = train_one_vs_all(pdata, py, WeightMatrix.from_flat(pdata, V[:, perm]))
    np.testing.assert_allclose(pdet.W, det.W[perm], atol=1e-12)
    np.testing.assert_allclose(pdet.b, det.b[perm], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_not_worse_than_zero_detector(seed):
    X, y, costs = random_problem(seed)
    w, b, _ = fit_weighted_svm(X, y, costs)
    best_const = min(svm_value(X, y, costs, np.zeros(X.shape[1]), bb) for bb in (-1.0, 0.0, 1.0))
    assert svm_value(X, y, costs, w, b) <= best_const + 1e-9


def test_degenerate_class_flagged():
    data, y, _ = two_class_corpus()
    V = np.ones((4, 2))
    V[:2, 0] = 0.0  # class 0 loses every positive
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        det = train_one_vs_all(data, y, WeightMatrix.from_flat(data, V))
    assert det.degenerate == (True, False)
    assert np.all(det.W[0] == 0) and det.b[0] == -1.0
    assert any(issubclass(w.category, DegenerateClassWarning) for w in caught)


def test_rejects_bad_inputs():
    X = np.array([[0.0, np.inf]])
    with pytest.raises(SpclError):
        fit_weighted_svm(X, np.array([1.0]), np.array([1.0]))
    with pytest.raises(SpclError):
        fit_weighted_svm(np.zeros((2, 1)), np.array([1.0, 0.0]), np.ones(2))
    with pytest.raises(SpclError):
        fit_weighted_svm(np.zeros((2, 1)), np.array([1.0, -1.0]), np.array([1.0, -1.0]))


def test_weighted_loss_sum_examples():
    data = make_dataset([make_bag("a", [[0.0, 0.0]])], 1)
    y = LabelMatrix.for_dataset(data, [[0]])
    det = DetectorSet(np.zeros((1, 2)), np.zeros(1))
    assert weighted_loss_sum(data, y, WeightMatrix.zeros(data), det) == 0.0
    assert weighted_loss_sum(data, y, WeightMatrix((np.ones((1, 1)),)), det) == 1.0


def test_weighted_loss_sum_naive_oracle():
    rng = np.random.default_rng(5)
    bags = [make_bag(f"b{k}", rng.normal(size=(4, 3)), weak=(k % 2,)) for k in range(5)]
    data = make_dataset(bags, 3)
    states = [[k % 2, -1, 2, -1] for k in range(5)]
    y = LabelMatrix.for_dataset(data, states)
    v = WeightMatrix(tuple(rng.uniform(size=(4, 3)) for _ in range(5)))
    det = random_detector(rng, 3, 3)
    ref = 0.0
    for k, bag in enumerate(bags):
        for i in range(bag.n):
            for c in range(3):
                s = sum(det.W[c, j] * bag.feats[i, j] for j in range(3)) + det.b[c]
                ref += v.blocks[k][i, c] * hinge(1.0 if states[k][i] == c else -1.0, s)
    assert weighted_loss_sum(data, y, v, det) == pytest.approx(ref, abs=1e-10)
