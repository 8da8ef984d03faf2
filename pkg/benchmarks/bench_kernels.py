"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--seed S]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from radarfuse import kernels


def cases(rng: np.random.Generator):
    cloud = rng.uniform(-25.0, 25.0, size=(2048, 3))
    centers = kernels.python.farthest_point_sample(cloud, 256, 0)
    cost = rng.uniform(0.0, 50.0, size=(64, 64))
    boxes = np.column_stack([
        rng.uniform(-5, 5, 64), rng.uniform(-5, 5, 64), np.zeros(64),
        rng.uniform(0.5, 4, 64), rng.uniform(0.5, 2, 64), np.ones(64), rng.uniform(-3, 3, 64),
    ])
    return {
        "farthest_point_sample 2048->256": lambda k: k.farthest_point_sample(cloud, 256, 0),
        "ball_query 256 centers r=3 k=16": lambda k: k.ball_query(cloud, centers, 3.0, 16),
        "hungarian_square 64x64": lambda k: k.hungarian_square(cost),
        "bev_intersection_matrix 64x64": lambda k: k.bev_intersection_matrix(boxes, boxes),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
        return 1
    print(f"{'kernel':<34} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        py = min(timeit.repeat(lambda: fn(kernels.python), number=1, repeat=args.repeat)) * 1e3
        cy = min(timeit.repeat(lambda: fn(kernels.compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<34} {py:>10.2f} {cy:>12.3f} {py / cy:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
