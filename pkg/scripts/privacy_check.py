#!/usr/bin/env python3
"""Histogram-based check of the privacy bound for both mechanisms.

For each epsilon, draws mechanism outputs at two inputs dq apart and reports
the max binned |log density ratio| (Laplace, should stay <= epsilon up to
sampling slack) and the violating-mass fraction for the calibrated Gaussian
(should stay <= delta plus slack).
"""
import argparse
import sys

import numpy as np

from dpaimd.privacy import (
    NoiseKind,
    empirical_dp_ratio,
    empirical_dp_violation_fraction,
    gaussian_sigma,
    laplace_scale,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epsilons", type=float, nargs="+", default=[0.1, 0.5, 1.0])
    parser.add_argument("--delta", type=float, default=0.01)
    parser.add_argument("--dq", type=float, default=1.0)
    parser.add_argument("--samples", type=int, default=10 ** 6)
    parser.add_argument("--bins", type=int, default=8)
    parser.add_argument("--seed", type=int, default=2)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'mechanism':<10} {'epsilon':>8} {'scale':>10} {'measured':>10} {'bound':>10}")
    ok = True
    for eps in args.epsilons:
        b = laplace_scale(args.dq, eps)
        r = empirical_dp_ratio(NoiseKind.LAPLACE, b, args.dq,
                               bins=args.bins, samples=args.samples, rng=rng)
        ok &= r <= 1.10 * eps
        print(f"{'laplace':<10} {eps:>8.3f} {b:>10.3f} {r:>10.4f} {1.10 * eps:>10.4f}")

        sigma = gaussian_sigma(args.dq, eps, args.delta)
        frac = empirical_dp_violation_fraction(
            NoiseKind.GAUSSIAN, sigma, args.dq, eps,
            bins=10 * args.bins, samples=args.samples, rng=rng)
        bound = args.delta + 0.005
        ok &= frac <= bound
        print(f"{'gaussian':<10} {eps:>8.3f} {sigma:>10.3f} {frac:>10.5f} {bound:>10.5f}")
    print("all bounds hold" if ok else "BOUND VIOLATION")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
