"""Synchronous discrete-time simulation of the private AIMD allocation loop.

Each step: the server compares the previous step's aggregate demand per
resource against capacity and broadcasts one event bit per saturated resource;
agents holding a 1-bit back off multiplicatively using a noisy scaling factor
computed from their average allocation, all other demands grow additively.
Runs are deterministic given the config and seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import AgentState, ConfigurationError, NumericError, SystemConfig, NOISE_STREAM
from .privacy import (
    NoiseKind,
    NoiseSpec,
    ScaleMode,
    SensitivityTracker,
    gaussian_sigma,
    laplace_scale,
)

LAMBDA_MIN = 1e-9


@dataclass
class ServerState:
    """Capacity bookkeeping on the server side."""

    capacities: np.ndarray
    event_bits: np.ndarray          # current S, one bit per resource
    event_counts: np.ndarray        # lifetime K_j per resource
    broadcast_bits_total: int = 0

    @classmethod
    def initial(cls, capacities) -> "ServerState":
        capacities = np.asarray(capacities, dtype=float)
        m = capacities.shape[0]
        return cls(capacities, np.zeros(m, dtype=np.uint8), np.zeros(m, dtype=int))


def server_step(server: ServerState, aggregate: np.ndarray) -> np.ndarray:
    """Set S_j = 1 iff aggregate_j >= C_j; updates event counts and bit totals."""
    aggregate = np.asarray(aggregate, dtype=float)
    if not np.isfinite(aggregate).all():
        raise NumericError("non-finite aggregate demand")
    bits = (aggregate >= server.capacities).astype(np.uint8)
    server.event_bits = bits
    server.event_counts += bits
    server.broadcast_bits_total += int(bits.sum())
    return bits


def additive_increase(x_j: float, alpha_j: float) -> float:
    return x_j + alpha_j


def compute_lambda_hat(gamma_j: float, derivative: float, noise: float,
                       xbar_j: float, lam_min: float = LAMBDA_MIN) -> float:
    """Noisy back-off factor gamma * |f' + d| / xbar, clamped into (lam_min, 1]."""
    if not xbar_j > 0:
        raise ConfigurationError("compute_lambda_hat needs xbar > 0")
    if not gamma_j > 0:
        raise ConfigurationError("compute_lambda_hat needs gamma > 0")
    raw = gamma_j * abs(derivative + noise) / xbar_j
    return min(max(raw, lam_min), 1.0)


def multiplicative_decrease(x_j: float, lam: float, beta_j: float) -> float:
    return (lam * beta_j + (1.0 - lam)) * x_j


def update_average(xbar_j: float, sum_at_events_j: float, k_j: int, x_j: float):
    """Exact incremental mean over the k_j + 1 event samples.

    ``k_j`` counts samples already folded into ``sum_at_events_j``; returns the
    updated (xbar, sum) pair.
    """
    new_sum = sum_at_events_j + x_j
    return new_sum / (k_j + 1), new_sum


@dataclass
class StepOutcome:
    """One step's observables (views into the trace arrays)."""

    step: int
    x: np.ndarray               # (n, m) demands at end of step
    xbar: np.ndarray            # (n, m) running averages
    event_bits: np.ndarray      # (m,)
    lambda_hat: np.ndarray      # (n, m), NaN where no MD occurred
    noisy_derivative: np.ndarray  # (n, m), NaN where no MD occurred


@dataclass
class Trace:
    """Struct-of-arrays record of a full run."""

    x: np.ndarray                   # (steps, n, m)
    xbar: np.ndarray                # (steps, n, m)
    event_bits: np.ndarray          # (steps, m) uint8
    lambda_hat: np.ndarray          # (steps, n, m), NaN off-event
    noisy_derivative: np.ndarray    # (steps, n, m), NaN off-event
    sensitivity: np.ndarray         # (steps, m) running max dq
    cum_bits: np.ndarray            # (steps,) cumulative broadcast bits
    event_counts: np.ndarray        # (m,) final K_j
    broadcast_bits_total: int
    noise_scales: np.ndarray        # (m,) scales actually used (0 where none)
    final_agents: list              # list[AgentState]

    @property
    def steps(self) -> int:
        return self.x.shape[0]

    @property
    def n_agents(self) -> int:
        return self.x.shape[1]

    @property
    def n_resources(self) -> int:
        return self.x.shape[2]

    def outcome(self, nu: int) -> StepOutcome:
        return StepOutcome(nu, self.x[nu], self.xbar[nu], self.event_bits[nu],
                           self.lambda_hat[nu], self.noisy_derivative[nu])


class _CostBatch:
    """Vectorized gradient of all agents' costs at their average vectors."""

    def __init__(self, costs):
        n = len(costs)
        m = costs[0].n_resources
        t_max = max(f.coeffs.shape[0] for f in costs)
        self.coeffs = np.zeros((n, t_max))
        # padded terms get exponent 1 so powers stay finite; zero coeff kills them
        self.exps = np.ones((n, t_max, m), dtype=int)
        for i, f in enumerate(costs):
            t = f.coeffs.shape[0]
            self.coeffs[i, :t] = f.coeffs
            self.exps[i, :t] = f.exponents
        self.mod_exps = []
        for j in range(m):
            mod = self.exps.copy()
            mod[:, :, j] = np.maximum(self.exps[:, :, j] - 1, 0)
            self.mod_exps.append(mod)
        self.m = m

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """x: (n, m) evaluation points -> (n, m) partial derivatives."""
        out = np.empty_like(x)
        xe = x[:, None, :]
        for j in range(self.m):
            mono = np.prod(xe ** self.mod_exps[j], axis=2)
            out[:, j] = np.einsum("nt,nt->n", self.coeffs * self.exps[:, :, j], mono)
        return out


def _agent_rngs(config: SystemConfig) -> list:
    return [
        np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(NOISE_STREAM, aid)))
        for aid in config.agent_ids
    ]


def resolve_noise_scales(config: SystemConfig) -> np.ndarray:
    """Per-resource noise scales; calibrated specs run a noiseless pilot first.

    The pilot reuses the config's seed and step count, measures the realized
    sensitivity with burn-in, then the calibration formula converts it to a
    scale. A per-spec sensitivity override skips the pilot for that resource.
    """
    m = config.n_resources
    scales = np.zeros(m)
    needs_pilot = [
        j for j, spec in enumerate(config.noise)
        if spec.kind is not NoiseKind.NONE
        and spec.scale_mode is ScaleMode.CALIBRATED
        and spec.sensitivity is None
    ]
    pilot_dq = None
    if needs_pilot:
        pilot_cfg = replace(
            config,
            noise=[NoiseSpec(kind=NoiseKind.NONE) for _ in range(m)],
            agent_ids=list(config.agent_ids),
        )
        pilot = _simulate(pilot_cfg, np.zeros(m))
        pilot_dq = pilot.sensitivity[-1] if pilot.steps else np.zeros(m)
    for j, spec in enumerate(config.noise):
        if spec.kind is NoiseKind.NONE:
            continue
        if spec.scale_mode is ScaleMode.FIXED:
            scales[j] = spec.scale
            continue
        dq = spec.sensitivity if spec.sensitivity is not None else float(pilot_dq[j])
        if not dq > 0:
            raise ConfigurationError(
                f"calibration found no positive sensitivity for resource {j}"
            )
        if spec.kind is NoiseKind.LAPLACE:
            scales[j] = laplace_scale(dq, spec.epsilon)
        else:
            scales[j] = gaussian_sigma(dq, spec.epsilon, spec.delta)
    return scales


def run(config: SystemConfig) -> Trace:
    """Full simulation run; deterministic given config and seed."""
    return _simulate(config, resolve_noise_scales(config))


def _simulate(config: SystemConfig, scales: np.ndarray) -> Trace:
    n, m = config.n_agents, config.n_resources
    steps = config.steps
    capacities = np.array([r.capacity for r in config.resources])
    alpha = np.array([r.alpha for r in config.resources])
    beta = np.array([r.beta for r in config.resources])
    gamma = np.array([r.gamma for r in config.resources])

    server = ServerState.initial(capacities)
    batch = _CostBatch(config.agents)
    rngs = _agent_rngs(config)
    tracker = SensitivityTracker(
        n_agents=n, n_resources=m, burn_in_events=config.burn_in_events,
        p=max((s.norm_order for s in config.noise if s.kind is not NoiseKind.NONE), default=1),
        per_agent=config.per_agent_sensitivity,
    )

    x = np.zeros((n, m))
    xbar = np.zeros((n, m))
    sum_ev = np.zeros((n, m))           # includes the initial x(0) = 0 sample
    samples_taken = np.ones(m, dtype=int)
    k = np.zeros(m, dtype=int)

    tr_x = np.empty((steps, n, m))
    tr_xbar = np.empty((steps, n, m))
    tr_bits = np.empty((steps, m), dtype=np.uint8)
    tr_lam = np.full((steps, n, m), np.nan)
    tr_nderiv = np.full((steps, n, m), np.nan)
    tr_dq = np.empty((steps, m))
    tr_cum = np.empty(steps, dtype=np.int64)

    for nu in range(steps):
        bits = server_step(server, x.sum(axis=0))
        fired = np.nonzero(bits)[0]
        if fired.size:
            for j in fired:
                k[j] += 1
                tracker.note_event(j)
                # incremental event-average over the pre-MD peak samples
                sum_ev[:, j] += x[:, j]
                xbar[:, j] = sum_ev[:, j] / (samples_taken[j] + 1)
                samples_taken[j] = k[j] + 1
            grads = batch.gradient(xbar)
            if not np.isfinite(grads).all():
                raise NumericError(f"non-finite derivative at step {nu}", step=nu)
            for j in fired:
                spec = config.noise[j]
                tracker.update_all(j, grads[:, j])
                if spec.kind is NoiseKind.NONE:
                    d = np.zeros(n)
                elif spec.kind is NoiseKind.LAPLACE:
                    d = np.array([rng.laplace(0.0, scales[j]) for rng in rngs])
                else:
                    d = np.array([rng.normal(0.0, scales[j]) for rng in rngs])
                tr_nderiv[nu, :, j] = grads[:, j] + d
                live = xbar[:, j] > 0
                lam = np.clip(gamma[j] * np.abs(grads[:, j] + d) / np.where(live, xbar[:, j], 1.0),
                              LAMBDA_MIN, 1.0)
                tr_lam[nu, live, j] = lam[live]
                # xbar == 0 is the degenerate start: demand held this event
                x[live, j] = (lam[live] * beta[j] + (1.0 - lam[live])) * x[live, j]
        grow = bits == 0
        if grow.any():
            x[:, grow] += alpha[grow]
        if not np.isfinite(x).all():
            raise NumericError(f"non-finite demand at step {nu}", step=nu)
        tr_x[nu] = x
        tr_xbar[nu] = xbar
        tr_bits[nu] = bits
        tr_dq[nu] = tracker.running_max.max(axis=0) if config.per_agent_sensitivity else tracker.running_max
        tr_cum[nu] = server.broadcast_bits_total

    final_agents = [
        AgentState(x=x[i].copy(), xbar=xbar[i].copy(), k=k.copy(),
                   sum_at_events=sum_ev[i].copy(), rng_stream=config.agent_ids[i])
        for i in range(n)
    ]
    return Trace(
        x=tr_x, xbar=tr_xbar, event_bits=tr_bits, lambda_hat=tr_lam,
        noisy_derivative=tr_nderiv, sensitivity=tr_dq, cum_bits=tr_cum,
        event_counts=server.event_counts.copy(),
        broadcast_bits_total=server.broadcast_bits_total,
        noise_scales=scales.copy(), final_agents=final_agents,
    )
