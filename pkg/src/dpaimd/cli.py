"""Experiment orchestration: config files, sweeps, trace/summary emission.

Config files are JSON with an explicit schema_version; unknown keys are
rejected so sweep-path typos fail loudly instead of silently running the
wrong experiment. Exit codes: 0 ok, 2 config error, 3 numeric abort.
"""
from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import baseline, engine, metrics, model
from .model import ConfigurationError, CostFunction, NumericError, ResourceConfig, SystemConfig
from .privacy import NoiseKind, NoiseSpec, ScaleMode

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
MAX_SERIES_POINTS = 512

_TOP_KEYS = {
    "schema_version", "agents", "resources", "noise", "steps", "seed",
    "burn_in_events", "per_agent_sensitivity", "agent_ids", "sweep", "output_dir",
}
_AGENT_KEYS = {"terms"}
_RESOURCE_KEYS = {"capacity", "alpha", "beta", "gamma"}
_NOISE_KEYS = {"kind", "epsilon", "delta", "scale_mode", "scale", "sensitivity"}
_SWEEP_KEYS = {"axes", "seeds"}
_AXIS_KEYS = {"path", "values"}


def _reject_unknown(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) {sorted(unknown)} in {where}")


def parse_config(raw: dict) -> SystemConfig:
    """Build a SystemConfig from a parsed JSON document (sweep block ignored)."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config root")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(
            f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}"
        )
    for req in ("agents", "resources", "noise", "steps", "seed"):
        if req not in raw:
            raise ConfigurationError(f"missing required field '{req}'")

    agents = []
    for idx, a in enumerate(raw["agents"]):
        _reject_unknown(a, _AGENT_KEYS, f"agents[{idx}]")
        terms = a.get("terms")
        if not terms:
            raise ConfigurationError(f"agents[{idx}].terms must be a non-empty list")
        coeffs = np.array([t[0] for t in terms], dtype=float)
        exps = np.array([t[1] for t in terms], dtype=int)
        agents.append(CostFunction(coeffs=coeffs, exponents=exps))

    resources = []
    for idx, r in enumerate(raw["resources"]):
        _reject_unknown(r, _RESOURCE_KEYS, f"resources[{idx}]")
        try:
            resources.append(ResourceConfig(**r))
        except (TypeError, ConfigurationError) as exc:
            raise ConfigurationError(f"resources[{idx}]: {exc}") from exc

    noise = []
    for idx, nspec in enumerate(raw["noise"]):
        _reject_unknown(nspec, _NOISE_KEYS, f"noise[{idx}]")
        try:
            noise.append(NoiseSpec(**nspec))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"noise[{idx}]: {exc}") from exc

    if "sweep" in raw:
        _reject_unknown(raw["sweep"], _SWEEP_KEYS, "sweep")
        for idx, axis in enumerate(raw["sweep"].get("axes", [])):
            _reject_unknown(axis, _AXIS_KEYS, f"sweep.axes[{idx}]")

    return SystemConfig(
        agents=agents,
        resources=resources,
        noise=noise,
        steps=int(raw["steps"]),
        seed=int(raw["seed"]),
        burn_in_events=int(raw.get("burn_in_events", 5)),
        per_agent_sensitivity=bool(raw.get("per_agent_sensitivity", False)),
        agent_ids=raw.get("agent_ids"),
    )


def serialize_config(config: SystemConfig) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "agents": [
            {"terms": [[float(c), [int(e) for e in row]]
                       for c, row in zip(f.coeffs, f.exponents)]}
            for f in config.agents
        ],
        "resources": [
            {"capacity": r.capacity, "alpha": r.alpha, "beta": r.beta, "gamma": r.gamma}
            for r in config.resources
        ],
        "noise": [_noise_to_dict(s) for s in config.noise],
        "steps": config.steps,
        "seed": config.seed,
        "burn_in_events": config.burn_in_events,
        "per_agent_sensitivity": config.per_agent_sensitivity,
        "agent_ids": list(config.agent_ids),
    }
    return doc


def _noise_to_dict(spec: NoiseSpec) -> dict:
    d = {"kind": spec.kind.value, "scale_mode": spec.scale_mode.value}
    for key in ("epsilon", "delta", "scale", "sensitivity"):
        value = getattr(spec, key)
        if value is not None:
            d[key] = value
    return d


# ---------------------------------------------------------------------------
# Sweep expansion
# ---------------------------------------------------------------------------

def _apply_path(doc: dict, path: str, value):
    """Set a dotted path like 'noise.0.scale' inside the raw config document."""
    parts = path.split(".")
    node = doc
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node[part]
    leaf = parts[-1]
    if isinstance(node, list):
        node[int(leaf)] = value
    else:
        if leaf not in node and leaf not in _TOP_KEYS | _NOISE_KEYS | _RESOURCE_KEYS:
            raise ConfigurationError(f"sweep path '{path}' targets unknown key '{leaf}'")
        node[leaf] = value


def expand_sweep(raw: dict):
    """Yield (point_index, overrides, raw_config, seed) for the sweep cross product."""
    sweep = raw.get("sweep", {})
    axes = sweep.get("axes", [])
    seeds = sweep.get("seeds", [raw["seed"]])
    value_lists = [axis["values"] for axis in axes]
    paths = [axis["path"] for axis in axes]
    points = list(itertools.product(*value_lists)) if axes else [()]
    jobs = []
    for p_idx, values in enumerate(points):
        for seed in seeds:
            doc = copy.deepcopy(raw)
            doc.pop("sweep", None)
            doc["seed"] = int(seed)
            overrides = dict(zip(paths, values))
            for path, value in overrides.items():
                _apply_path(doc, path, value)
            jobs.append((p_idx, overrides, doc, int(seed)))
    return jobs


# ---------------------------------------------------------------------------
# Output emission
# ---------------------------------------------------------------------------

def _downsample(series: np.ndarray, limit: int = MAX_SERIES_POINTS):
    if series.shape[0] <= limit:
        idx = np.arange(series.shape[0])
    else:
        idx = np.unique(np.linspace(0, series.shape[0] - 1, limit).astype(int))
    return idx, series[idx]


def summary_to_dict(summary: metrics.RunSummary, config: SystemConfig,
                    optimum: baseline.OptimalAllocation | None) -> dict:
    bits_idx, bits = _downsample(summary.comm_bits_cumulative)
    sens_idx, sens = _downsample(summary.sensitivity_series)
    spread = {}
    for j, (steps_j, spread_j) in summary.derivative_spread.items():
        s_idx, s_val = _downsample(spread_j)
        spread[str(j)] = {
            "event_steps": steps_j[s_idx].tolist(),
            "spread": s_val.tolist(),
        }
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "steps": config.steps,
        "final_xbar": summary.final_xbar.tolist(),
        "abs_error": summary.abs_error.tolist() if summary.abs_error is not None else None,
        "cost_ratio": summary.cost_ratio,
        "event_counts": summary.event_counts.tolist(),
        "broadcast_bits_total": summary.broadcast_bits_total,
        "noise_scales": summary.noise_scales.tolist(),
        "comm_bits": {"steps": bits_idx.tolist(), "values": bits.tolist()},
        "sensitivity": {"steps": sens_idx.tolist(), "values": sens.tolist()},
        "derivative_spread": spread,
    }
    if optimum is not None:
        doc["x_star"] = optimum.x_star.tolist()
        doc["optimal_total_cost"] = optimum.total_cost
        doc["kkt_residual"] = optimum.kkt_residual
    return doc


def write_trace_csv(trace: engine.Trace, path: Path):
    """Full per-step trace, one row per (step, agent, resource), 17 sig digits."""
    fmt = lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.17g}"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "agent", "resource", "x", "xbar", "event_bit",
                        "lambda_hat", "noisy_derivative", "sensitivity", "cum_bits"])
        for nu in range(trace.steps):
            for i in range(trace.n_agents):
                for j in range(trace.n_resources):
                    writer.writerow([
                        nu, i, j,
                        fmt(float(trace.x[nu, i, j])),
                        fmt(float(trace.xbar[nu, i, j])),
                        int(trace.event_bits[nu, j]),
                        fmt(float(trace.lambda_hat[nu, i, j])),
                        fmt(float(trace.noisy_derivative[nu, i, j])),
                        fmt(float(trace.sensitivity[nu, j])),
                        int(trace.cum_bits[nu]),
                    ])


def _run_one(job):
    """Worker for one sweep point x seed; returns (tag, summary dict)."""
    p_idx, overrides, doc, seed, emit_trace, out_dir = job
    config = parse_config(doc)
    optimum = baseline.solve_optimum(config.agents, config.resources)
    trace = engine.run(config)
    summary = metrics.summarize(trace, config.agents, optimum)
    sdoc = summary_to_dict(summary, config, optimum)
    sdoc["overrides"] = {k: overrides[k] for k in sorted(overrides)}
    tag = f"p{p_idx:03d}_s{seed}"
    out_path = Path(out_dir) / f"summary_{tag}.json"
    out_path.write_text(json.dumps(sdoc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if emit_trace:
        write_trace_csv(trace, Path(out_dir) / f"trace_{tag}.csv")
    max_rel_err = None
    if summary.abs_error is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = summary.abs_error / np.abs(optimum.x_star)
        max_rel_err = float(np.nanmax(rel))
    return {
        "tag": tag, "point": p_idx, "seed": seed,
        "overrides": json.dumps(sdoc["overrides"], sort_keys=True),
        "cost_ratio": summary.cost_ratio,
        "max_rel_error": max_rel_err,
        "broadcast_bits_total": summary.broadcast_bits_total,
    }


def run_experiment(config_path, seed=None, steps=None, jobs=1,
                   emit_trace=False, out=None) -> int:
    """Run the config (with optional sweep); returns a process exit code."""
    try:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if seed is not None:
            raw["seed"] = int(seed)
            raw.get("sweep", {}).pop("seeds", None)
        if steps is not None:
            raw["steps"] = int(steps)
        parse_config(raw)  # validate before expanding
        out_dir = Path(out) if out else Path(raw.get("output_dir", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        work = expand_sweep(raw)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"sweep cross-product: {len(work)} run(s)")
    full_jobs = [(p, ov, doc, s, emit_trace, str(out_dir)) for p, ov, doc, s in work]
    try:
        if jobs > 1 and len(full_jobs) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_run_one, full_jobs))
        else:
            rows = [_run_one(job) for job in full_jobs]
    except NumericError as exc:
        print(f"numeric abort at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    rows.sort(key=lambda r: (r["point"], r["seed"]))
    table_path = out_dir / "sweep_summary.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["tag", "point", "seed", "overrides", "cost_ratio",
                        "max_rel_error", "broadcast_bits_total"],
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(f"{row['tag']}: cost_ratio={row['cost_ratio']} "
              f"max_rel_error={row['max_rel_error']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Canonical experiment suite
# ---------------------------------------------------------------------------

REFERENCE_SEED = 20230601
REFERENCE_STEPS = 200_000


def reference_system_config(noise: list[NoiseSpec], seed: int = REFERENCE_SEED,
                            steps: int = REFERENCE_STEPS) -> SystemConfig:
    """Six agents, two resources: C=(5, 6), alpha=(0.01, 0.0125),
    beta=(0.70, 0.6), gamma=1/1000, with the canonical cost-function mix."""
    return SystemConfig(
        agents=model.reference_agent_costs(seed),
        resources=[
            ResourceConfig(capacity=5.0, alpha=0.01, beta=0.70, gamma=1e-3),
            ResourceConfig(capacity=6.0, alpha=0.0125, beta=0.6, gamma=1e-3),
        ],
        noise=noise,
        steps=steps,
        seed=seed,
    )


def _gaussian_pair(s1: float, s2: float) -> list[NoiseSpec]:
    return [
        NoiseSpec(kind=NoiseKind.GAUSSIAN, epsilon=0.2, delta=0.01,
                  scale_mode=ScaleMode.FIXED, scale=s1),
        NoiseSpec(kind=NoiseKind.GAUSSIAN, epsilon=0.2, delta=0.01,
                  scale_mode=ScaleMode.FIXED, scale=s2),
    ]


def emit_reference_suite(out_dir) -> list[Path]:
    """Write the four canonical config files (Gaussian base + two higher-noise
    grids, and the Laplace configuration) so the whole suite is one command."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suite = {
        "gaussian_base.json": _gaussian_pair(20.50, 39.31),
        "gaussian_medium.json": _gaussian_pair(50.0, 70.0),
        "gaussian_high.json": _gaussian_pair(70.0, 110.0),
        "laplace_base.json": [
            NoiseSpec(kind=NoiseKind.LAPLACE, epsilon=0.1,
                      scale_mode=ScaleMode.FIXED, scale=59.0),
            NoiseSpec(kind=NoiseKind.LAPLACE, epsilon=0.1,
                      scale_mode=ScaleMode.FIXED, scale=63.4),
        ],
    }
    paths = []
    for name, noise in suite.items():
        config = reference_system_config(noise)
        path = out_dir / name
        path.write_text(
            json.dumps(serialize_config(config), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        paths.append(path)
    return paths


def solve_command(config_path) -> int:
    try:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        config = parse_config(raw)
    except (OSError, json.JSONDecodeError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        opt = baseline.solve_optimum(config.agents, config.resources)
    except RuntimeError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({
        "x_star": opt.x_star.tolist(),
        "total_cost": opt.total_cost,
        "kkt_residual": opt.kkt_residual,
    }, sort_keys=True, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dpaimd",
                                     description="Differentially private AIMD allocation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config (with optional sweep)")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--steps", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--emit-trace", action="store_true")
    p_run.add_argument("--out", default=None)

    p_suite = sub.add_parser("paper-suite", help="emit the canonical experiment configs")
    p_suite.add_argument("--out", required=True)

    p_solve = sub.add_parser("solve", help="solve the convex baseline only")
    p_solve.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config, seed=args.seed, steps=args.steps,
                              jobs=args.jobs, emit_trace=args.emit_trace, out=args.out)
    if args.command == "paper-suite":
        for path in emit_reference_suite(args.out):
            print(path)
        return EXIT_OK
    return solve_command(args.config)


if __name__ == "__main__":
    sys.exit(main())
