import numpy as np
import pytest

from spcl import BBox, Dataset, DetectorSet, ImageBag

_ACCEPTANCE = []


@pytest.fixture
def report():
    """Collect one line per acceptance criterion; printed in the terminal summary."""
    return _ACCEPTANCE.append


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)


def make_bag(bag_id, feats, boxes=None, weak=(0,), saliency=None, gt=None):
    feats = np.atleast_2d(np.asarray(feats, dtype=float))
    if boxes is None:
        boxes = [[10.0 * i, 0.0, 10.0 * i + 5.0, 5.0] for i in range(feats.shape[0])]
    sal = None if saliency is None else BBox(*saliency)
    return ImageBag(bag_id, feats, np.asarray(boxes, dtype=float), frozenset(weak), sal, gt)


def make_dataset(bags, C):
    return Dataset(tuple(bags), C, bags[0].feats.shape[1])


def random_detector(rng, C, d, scale=1.0):
    return DetectorSet(rng.normal(0, scale, (C, d)), rng.normal(0, scale, C))
