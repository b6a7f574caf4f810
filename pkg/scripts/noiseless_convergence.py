#!/usr/bin/env python3
"""Noiseless sanity run: simulate the reference system and compare against
the convex baseline. Prints per-agent average allocations next to the
optimum, the relative errors, and the achieved-cost ratio.
"""
import argparse
import sys

import numpy as np

import dpaimd
from dpaimd import cli
from dpaimd.metrics import cost_ratio
from dpaimd.privacy import NoiseKind, NoiseSpec


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=cli.REFERENCE_STEPS)
    parser.add_argument("--seed", type=int, default=cli.REFERENCE_SEED)
    args = parser.parse_args()

    noise = [NoiseSpec(kind=NoiseKind.NONE)] * 2
    config = cli.reference_system_config(noise, seed=args.seed, steps=args.steps)
    trace = dpaimd.run(config)
    optimum = dpaimd.solve_optimum(config.agents, config.resources)

    xbar = trace.xbar[-1]
    rel = np.abs(xbar - optimum.x_star) / optimum.x_star
    print(f"{'agent':>5} {'resource':>8} {'xbar':>10} {'x*':>10} {'rel err':>10}")
    for i in range(config.n_agents):
        for j in range(config.n_resources):
            print(f"{i:>5} {j:>8} {xbar[i, j]:>10.5f} "
                  f"{optimum.x_star[i, j]:>10.5f} {rel[i, j]:>10.5f}")
    print(f"events per resource: {trace.event_counts.tolist()}")
    print(f"cost ratio vs optimum: {cost_ratio(trace, config.agents, optimum):.5f}")
    print(f"max relative error: {rel.max():.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
