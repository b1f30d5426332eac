"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both flavours are called directly, so the SPCL_NO_NUMBA flag does not matter
here.  The first jitted call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from spcl import kernels
from spcl.harness.synth import SynthConfig, generate_synthetic
from spcl.wsvm import gram_matrix


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def random_boxes(rng, n, size=100.0):
    xy = rng.uniform(0, size - 20, size=(n, 2))
    wh = rng.uniform(5, 40, size=(n, 2))
    return np.ascontiguousarray(np.hstack([xy, xy + wh]))


def cases(rng):
    a = random_boxes(rng, 400)
    b = random_boxes(rng, 300)
    yield "iou_matrix 400x300", kernels.iou_matrix_jit, kernels.iou_matrix_np, (a, b)

    boxes = random_boxes(rng, 2000)
    scores = rng.normal(size=2000)
    yield "nms n=2000", kernels.nms_jit, kernels.nms_np, (boxes, scores, 0.3)

    losses = rng.exponential(1.0, size=30 * 400)
    offsets = np.arange(0, losses.size + 1, 30, dtype=np.int64)
    yield "spl_weights 400 bags", kernels.spl_weights_jit, kernels.spl_weights_np, (losses, offsets, 1.0, 1.0)

    train, _, _ = generate_synthetic(SynthConfig(K=60))
    X = train.X
    y = np.where(rng.uniform(size=X.shape[0]) < 0.3, 1.0, -1.0)
    cost = np.ones(X.shape[0])
    K = gram_matrix(X)
    idx = np.arange(X.shape[0], dtype=np.int64)
    n = X.shape[0]
    args = (K, idx, y, cost, 1e-6, 1000 * n, np.zeros(n), -np.ones(n), True)
    yield f"smo n={n}", kernels.smo_jit, kernels.smo_np, args


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for name, jit, ref, fargs in cases(rng):
        out_j, out_n = jit(*fargs), ref(*fargs)
        first_j = out_j[0] if isinstance(out_j, tuple) else out_j
        first_n = out_n[0] if isinstance(out_n, tuple) else out_n
        assert np.allclose(first_j, first_n, atol=1e-9), name
        tj = best_of(lambda: jit(*fargs), args.repeat)
        tn = best_of(lambda: ref(*fargs), args.repeat)
        print(f"{name:<22} {tj * 1e3:11.3f} {tn * 1e3:11.3f} {tn / tj:7.1f}x")


if __name__ == "__main__":
    main()
