#!/usr/bin/env python3
"""Alignment benchmark on the rotated-and-permuted synthetic fixture.

Cross-domain tone matching with no shared labels is the hard version of
the alignment problem, so the fixture plants a known rotation plus a
partial permutation and scores each method on how much of the planted
structure it recovers. Expected ordering: the lexicon-induction method
at or above Procrustes, both well above the random-map baseline.
"""

import argparse
import time

from tonelab.alignment import (benchmark_to_csv, benchmark_to_json,
                               rotated_permuted_fixture, run_benchmark)


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="fixture seed")
    parser.add_argument("--points", type=int, default=40)
    parser.add_argument("--dims", type=int, default=8)
    parser.add_argument("--sigma", type=float, default=0.05)
    parser.add_argument("--seeds", type=int, default=100,
                        help="seeds for the stochastic methods' CIs")
    parser.add_argument("--csv", default=None, help="write the table here")
    parser.add_argument("--json", default=None)
    return parser.parse_args()


def main() -> None:
    args = parse_args()
    x, y, truth = rotated_permuted_fixture(seed=args.seed, m=args.points,
                                           n=args.dims, sigma=args.sigma)
    start = time.perf_counter()
    report = run_benchmark(x, y, truth, seeds=args.seeds)
    elapsed = time.perf_counter() - start

    print(f"fixture: {args.points} tones x {args.dims} dims, "
          f"sigma={args.sigma}, {args.seeds} seeds, {elapsed:.1f}s")
    print(f"{'method':<12} {'sim recovery r':>16} {'95% CI':>20} "
          f"{'knn k=1':>9}")
    for method in ("bli", "gwot", "procrustes", "random"):
        if method not in report.rows:
            continue
        mean, lo, hi = report.rows[method]["similarity_recovery"]
        knn, _, _ = report.rows[method]["knn_rate_k1"]
        print(f"{method:<12} {mean:>+16.3f} {f'[{lo:+.3f}, {hi:+.3f}]':>20} "
              f"{knn:>9.3f}")
    if report.failed:
        print(f"failed cells: {len(report.failed)}")
    if args.csv:
        benchmark_to_csv(report, args.csv)
        print(f"table -> {args.csv}")
    if args.json:
        benchmark_to_json(report, args.json)
        print(f"json -> {args.json}")


if __name__ == "__main__":
    main()
