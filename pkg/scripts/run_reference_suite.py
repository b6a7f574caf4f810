#!/usr/bin/env python3
"""Emit the canonical experiment configs and run them end to end.

Writes the four config files (three Gaussian noise grids plus the Laplace
configuration) into --out, then runs each one, producing per-run summary
JSON files and a sweep_summary.csv per config. Use --steps to shorten the
horizon for a quick smoke run.
"""
import argparse
import sys
from pathlib import Path

from dpaimd import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="suite_output", help="output directory")
    parser.add_argument("--steps", type=int, default=None,
                        help="override the simulated horizon (default: full run)")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--emit-trace", action="store_true",
                        help="also write full per-step trace CSVs (large)")
    args = parser.parse_args()

    out = Path(args.out)
    config_paths = cli.emit_reference_suite(out / "configs")
    for path in config_paths:
        print(f"== {path.stem} ==")
        code = cli.run_experiment(
            path, steps=args.steps, jobs=args.jobs,
            emit_trace=args.emit_trace, out=out / path.stem,
        )
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
