"""Threshold optimization by stochastic gradient descent.

Each iteration draws one fresh sample path, estimates the cost gradient with
respect to the two thresholds from that single path, and takes a projected
descent step.  A common-random-numbers finite-difference oracle is provided
for validating the gradient estimates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ._parallel import pmap
from .ipa import EstimatorFault, estimate_gradient
from .simulate import SimConfig, sample_cost, simulate

# Seed offsets keeping the descent paths, the terminal-cost paths and the
# initial-cost paths on disjoint streams.
_FINAL_SEED_OFFSET = 1_000_000
_INITIAL_SEED_OFFSET = 2_000_000


@dataclass(frozen=True)
class StepRule:
    """Step-size schedule, projection floor, and stopping rules."""

    rho0: float = 2.0
    decay: Literal["constant", "harmonic"] = "harmonic"
    kappa: float = 50.0
    s_min: float = 0.1
    max_iterations: int = 800
    convergence_tol: float = 0.05
    convergence_window: int = 20

    def __post_init__(self) -> None:
        if not self.rho0 > 0:
            raise ValueError(f"rho0 must be positive: {self.rho0}")
        if not self.s_min > 0:
            raise ValueError(f"s_min must be positive: {self.s_min}")
        if self.decay not in ("constant", "harmonic"):
            raise ValueError(f"unknown decay rule: {self.decay}")

    def step_size(self, iteration: int) -> float:
        if self.decay == "constant":
            return self.rho0
        return self.rho0 / (1.0 + iteration / self.kappa)


def gradient_step(
    s: tuple[float, float],
    grad: tuple[float, float],
    rho: float,
    s_min: float = 0.1,
) -> tuple[float, float]:
    """One projected descent update: ``s - rho * grad``, floored at ``s_min``."""
    if rho < 0:
        raise ValueError(f"step size must be nonnegative: {rho}")
    return (
        max(s_min, s[0] - rho * grad[0]),
        max(s_min, s[1] - rho * grad[1]),
    )


@dataclass
class IterationRecord:
    iteration: int
    s: tuple[float, float]
    gradient: tuple[float, float]
    cost: float
    seed: int


@dataclass
class OptRunRecord:
    """Full trajectory of one descent run plus its terminal evaluation."""

    iterations: list[IterationRecord]
    s_star: tuple[float, float]
    cost_star: float
    cost_initial: float
    reduction_pct: float
    converged: bool

    def trajectory_lines(self) -> list[str]:
        lines = [TRAJECTORY_HEADER]
        for it in self.iterations:
            lines.append(
                f"{it.iteration},{it.s[0]:.9f},{it.s[1]:.9f},"
                f"{it.gradient[0]:.12g},{it.gradient[1]:.12g},"
                f"{it.cost:.9f},{it.seed}"
            )
        return lines


TRAJECTORY_HEADER = "l,s1,s2,H1,H2,J,seed"


def _cost_at(args: tuple[SimConfig, float, float, int]) -> float:
    config, s1, s2, seed = args
    path = simulate(config.with_thresholds(s1, s2).with_seed(seed))
    return sample_cost(path)


def mean_cost(
    config: SimConfig,
    s: tuple[float, float],
    seeds: list[int],
    jobs: int = 1,
) -> float:
    """Replication-averaged cost at fixed thresholds."""
    costs = pmap(_cost_at, [(config, s[0], s[1], sd) for sd in seeds], jobs)
    return float(np.mean(costs))


def optimize(
    config: SimConfig,
    rule: StepRule,
    s0: tuple[float, float],
    seed0: int | None = None,
    final_replications: int = 10,
    jobs: int = 1,
) -> OptRunRecord:
    """Run the descent from ``s0``; one sample path per iteration.

    Iteration ``l`` uses seed ``seed0 + l``.  The run stops once the step
    stays below the convergence tolerance for a full trailing window, or at
    the iteration cap.  The terminal and initial costs are re-estimated from
    ``final_replications`` fresh paths each so they are comparable with
    replication-averaged benchmarks.
    """
    if seed0 is None:
        seed0 = config.seed
    s = (float(s0[0]), float(s0[1]))
    records: list[IterationRecord] = []
    small_steps = 0
    converged = False

    for l in range(rule.max_iterations):
        seed = seed0 + l
        path = simulate(config.with_thresholds(*s).with_seed(seed))
        try:
            est = estimate_gradient(path)
        except EstimatorFault as exc:
            raise EstimatorFault(f"iteration {l} (seed {seed}): {exc}") from exc
        grad = (float(est.gradient[0]), float(est.gradient[1]))
        cost = sample_cost(path)
        records.append(IterationRecord(l, s, grad, cost, seed))

        s_next = gradient_step(s, grad, rule.step_size(l), rule.s_min)
        if max(abs(s_next[0] - s[0]), abs(s_next[1] - s[1])) < rule.convergence_tol:
            small_steps += 1
        else:
            small_steps = 0
        s = s_next
        if small_steps >= rule.convergence_window:
            converged = True
            break

    final_seeds = [seed0 + _FINAL_SEED_OFFSET + k for k in range(final_replications)]
    initial_seeds = [seed0 + _INITIAL_SEED_OFFSET + k for k in range(final_replications)]
    cost_star = mean_cost(config, s, final_seeds, jobs)
    cost_initial = mean_cost(config, (float(s0[0]), float(s0[1])), initial_seeds, jobs)
    reduction = 100.0 * (cost_initial - cost_star) / cost_initial

    return OptRunRecord(
        iterations=records,
        s_star=s,
        cost_star=cost_star,
        cost_initial=cost_initial,
        reduction_pct=reduction,
        converged=converged,
    )


def finite_difference_samples(
    config: SimConfig,
    s: tuple[float, float],
    delta: float,
    replications: int,
    seed_base: int,
    jobs: int = 1,
) -> np.ndarray:
    """Per-replication central differences, shape ``(replications, 2)``.

    Each replication runs the plus and minus perturbations of each component
    under the same seed (common random numbers).
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive: {delta}")
    jobs_args = []
    for k in range(replications):
        seed = seed_base + k
        for i in (0, 1):
            for sign in (+1, -1):
                sp = list(s)
                sp[i] += sign * delta
                if sp[i] <= 0:
                    raise ValueError(
                        f"perturbed threshold {i} nonpositive: {sp[i]}"
                    )
                jobs_args.append((config, sp[0], sp[1], seed))
    costs = pmap(_cost_at, jobs_args, jobs)
    out = np.empty((replications, 2))
    pos = 0
    for k in range(replications):
        for i in (0, 1):
            plus, minus = costs[pos], costs[pos + 1]
            pos += 2
            out[k, i] = (plus - minus) / (2.0 * delta)
    return out


def finite_difference_oracle(
    config: SimConfig,
    s: tuple[float, float],
    delta: float,
    replications: int,
    seed_base: int,
    jobs: int = 1,
) -> np.ndarray:
    """Replication-averaged CRN central-difference gradient, shape ``(2,)``."""
    return finite_difference_samples(
        config, s, delta, replications, seed_base, jobs
    ).mean(axis=0)
