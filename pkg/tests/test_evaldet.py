import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import box_iou, eleven_point_ap
from spcl import BBox, Detection, SpclError, average_precision, corloc, evaluate_detections, match_detections
from spcl.core import GtObject

B = BBox(0, 0, 10, 10)


def test_exact_hit_is_tp():
    (m,) = match_detections([Detection("a", 0, B, 0.9)], {"a": [(0, B)]})
    assert m[1] is True


def test_second_detection_on_same_gt_is_fp():
    dets = [Detection("a", 0, B, 0.4), Detection("a", 0, BBox(0, 0, 10, 9), 0.8)]
    out = match_detections(dets, {"a": [(0, B)]})
    assert [(d.score, tp) for d, tp in out] == [(0.8, True), (0.4, False)]


def test_wrong_class_and_low_overlap_are_fp():
    gt = {"a": [(1, B)]}
    assert not match_detections([Detection("a", 0, B, 1.0)], gt)[0][1]
    assert not match_detections([Detection("a", 1, BBox(0, 0, 10, 4), 1.0)], gt)[0][1]


def test_score_ties_break_by_bag_then_box():
    dets = [Detection("b", 0, B, 1.0), Detection("a", 0, BBox(1, 1, 9, 9), 1.0), Detection("a", 0, B, 1.0)]
    out = match_detections(dets, {"a": [(0, B)], "b": [(0, B)]})
    assert [(d.bag_id, d.bbox.as_tuple()) for d, _ in out] == [
        ("a", (0, 0, 10, 10)), ("a", (1, 1, 9, 9)), ("b", (0, 0, 10, 10))]
    assert [tp for _, tp in out] == [True, False, True]


def reference_match(dets, gt, thresh=0.5):
    """Greedy matcher written against plain tuples."""
    ranked = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].bag_id, dets[i].bbox.as_tuple()))
    used = set()
    flags = []
    for i in ranked:
        d = dets[i]
        cands = [(box_iou(d.bbox.as_tuple(), g.as_tuple()), j) for j, (c, g) in enumerate(gt.get(d.bag_id, []))
                 if c == d.cls and (d.bag_id, j) not in used]
        cands = [t for t in cands if t[0] >= thresh]
        if cands:
            ov, j = max(cands, key=lambda t: (t[0], -t[1]))
            used.add((d.bag_id, j))
            flags.append(True)
        else:
            flags.append(False)
    return flags


@pytest.mark.parametrize("seed", range(30))
def test_matching_random(seed):
    rng = np.random.default_rng(seed)

    def box():
        x, y = rng.uniform(0, 20, 2)
        return BBox(x, y, x + rng.uniform(5, 15), y + rng.uniform(5, 15))

    gt = {f"b{k}": [(int(rng.integers(2)), box()) for _ in range(int(rng.integers(0, 3)))] for k in range(4)}
    dets = [Detection(f"b{int(rng.integers(4))}", int(rng.integers(2)), box(), float(rng.integers(5)))
            for _ in range(15)]
    got = [tp for _, tp in match_detections(dets, gt)]
    assert got == reference_match(dets, gt)


def test_ap_examples():
    assert average_precision([True, True], 2) == 1.0
    assert average_precision([False, False], 3) == 0.0
    assert average_precision([], 3) == 0.0
    with pytest.raises(SpclError):
        average_precision([True], 0)


def test_ap_three_detection_example():
    # precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1: six recall points see 1, five see 2/3
    assert eleven_point_ap([True, False, True], 2) == pytest.approx(28 / 33, abs=1e-15)
    assert average_precision([True, False, True], 2) == pytest.approx(28 / 33, abs=1e-12)


def test_ap_from_matched_pairs():
    dets = [Detection("a", 0, B, 0.9), Detection("a", 0, B, 0.5), Detection("b", 0, B, 0.1)]
    matched = match_detections(dets, {"a": [(0, B)], "b": [(0, B)]})
    assert average_precision(matched, 2) == pytest.approx(28 / 33, abs=1e-12)


flag_lists = st.lists(st.booleans(), max_size=20)


@settings(max_examples=200, deadline=None)
@given(flag_lists, st.integers(0, 5))
def test_ap_matches_longhand(flags, extra_gt):
    num_gt = sum(flags) + extra_gt
    if num_gt == 0:
        return
    assert average_precision(flags, num_gt) == pytest.approx(eleven_point_ap(flags, num_gt), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(flag_lists, st.integers(0, 5))
def test_ap_monotone_under_top_tp(flags, extra_gt):
    num_gt = sum(flags) + extra_gt + 1
    assert average_precision([True] + flags, num_gt) >= average_precision(flags, num_gt) - 1e-12


def test_ap_fp_order_below_last_tp_irrelevant():
    a = average_precision([True, False, True, False, False], 3)
    b = average_precision([True, False, True, False, False, False, False], 3)
    assert a == b


def test_evaluate_detections_skips_classes_without_gt():
    gt = {"a": [(0, B)]}
    res = evaluate_detections([Detection("a", 0, B, 1.0)], gt, num_classes=2)
    assert res == {"per_class_ap": [1.0, None], "mean_ap": 1.0}


class _Bag:
    def __init__(self, bag_id, weak):
        self.id, self.weak_labels = bag_id, frozenset(weak)


def test_corloc_examples():
    bags = [_Bag("a", [0]), _Bag("b", [0, 1])]
    gt = {"a": [GtObject(0, B)], "b": [GtObject(0, B), GtObject(1, BBox(20, 20, 30, 30))]}
    perfect = {("a", 0): B, ("b", 0): B, ("b", 1): BBox(20, 20, 30, 30)}
    assert corloc(bags, perfect, gt) == 1.0
    assert corloc(bags, {}, gt) == 0.0
    mixed = {("a", 0): B, ("b", 0): BBox(50, 50, 60, 60), ("b", 1): BBox(20, 20, 30, 30)}
    assert corloc(bags, mixed, gt) == pytest.approx(2 / 3)
    # a hit on the wrong class does not count
    assert corloc(bags, {("b", 1): B}, gt) == 0.0
