"""Benchmark reproduction: cost surfaces, scenario runs, and reports.

The named scenarios carry published reference results (optimal thresholds,
terminal costs, cost reductions) so a scenario run can print its outcome next
to the benchmark values.  Reference numbers are stored constants and are
never recomputed; each carries a label naming the benchmark table it comes
from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from ._parallel import pmap
from .model import CycleConfig, ThresholdVector
from .optimize import OptRunRecord, StepRule, mean_cost, optimize
from .simulate import SimConfig, sample_cost, simulate

#: Sample-path length (light switches) per profile; the fast profile exists
#: for CI and carries wider tolerances in the acceptance suite.
PROFILE_SWITCHES = {"full": 5000, "fast": 1000}


@dataclass(frozen=True)
class Reference:
    """A published benchmark value and where it comes from."""

    value: object
    origin: str


@dataclass(frozen=True)
class ScenarioSpec:
    """A named traffic pattern plus its published reference results."""

    name: str
    mean_interarrival: tuple[float, float]
    cycles: CycleConfig
    s0_list: tuple[tuple[float, float], ...]
    references: MappingProxyType

    def base_config(
        self,
        profile: str = "full",
        seed: int = 20_240_101,
        thresholds: tuple[float, float] = (5.0, 5.0),
    ) -> SimConfig:
        return SimConfig(
            mean_interarrival=self.mean_interarrival,
            discharge_rate=1.0,
            thresholds=ThresholdVector(*thresholds),
            cycles=self.cycles,
            weights=(1.0, 1.0),
            stop_switches=PROFILE_SWITCHES[profile],
            seed=seed,
        )


def _refs(**kwargs: tuple) -> MappingProxyType:
    return MappingProxyType({k: Reference(v[0], v[1]) for k, v in kwargs.items()})


_FIXED_CYCLES = CycleConfig(min_green=(10.0, 10.0), max_green=(30.0, 30.0))

SCENARIOS: dict[str, ScenarioSpec] = {
    "scenarioA": ScenarioSpec(
        name="scenarioA",
        mean_interarrival=(2.0, 6.0),
        cycles=_FIXED_CYCLES,
        s0_list=((10.0, 1.0), (9.0, 10.0)),
        references=_refs(
            s_star_ipa=((1.9, 3.7), "fixed-cycle benchmark table, rows 1-2"),
            cost_star_ipa=(4.3, "fixed-cycle benchmark table, rows 1-2"),
            reduction_pct=((66.0, 31.0), "fixed-cycle benchmark table, rows 1-2"),
            s_star_bf=((1.0, 4.0), "fixed-cycle benchmark table, rows 1-2"),
            cost_star_bf=(4.4, "fixed-cycle benchmark table, rows 1-2"),
            cost_initial=((12.8, 6.2), "fixed-cycle benchmark table, rows 1-2"),
        ),
    ),
    "scenarioB": ScenarioSpec(
        name="scenarioB",
        mean_interarrival=(2.0, 3.0),
        cycles=_FIXED_CYCLES,
        s0_list=((15.0, 3.0), (15.0, 15.0)),
        references=_refs(
            s_star_ipa=((4.6, 5.1), "fixed-cycle benchmark table, rows 3-4"),
            cost_star_ipa=(7.9, "fixed-cycle benchmark table, rows 3-4"),
            reduction_pct=((58.0, 40.0), "fixed-cycle benchmark table, rows 3-4"),
            s_star_bf=((5.0, 6.0), "fixed-cycle benchmark table, rows 3-4"),
            cost_star_bf=(8.8, "fixed-cycle benchmark table, rows 3-4"),
            cost_initial=((18.9, 13.1), "fixed-cycle benchmark table, rows 3-4"),
        ),
    ),
    # Cycle bounds below are the published optima of a prior cycle-length
    # optimization; they enter here as fixed configuration constants.
    "table2_row1": ScenarioSpec(
        name="table2_row1",
        mean_interarrival=(2.0, 3.0),
        cycles=CycleConfig(min_green=(10.2, 10.1), max_green=(19.3, 16.3)),
        s0_list=((8.0, 8.0),),
        references=_refs(
            s_star_ipa=((2.8, 4.3), "optimal-cycle benchmark table, row 1"),
            cost_star_ipa=(7.1, "optimal-cycle benchmark table, row 1"),
            reduction_pct=((15.0,), "optimal-cycle benchmark table, row 1"),
            s_star_bf=((2.0, 5.0), "optimal-cycle benchmark table, row 1"),
            cost_star_bf=(7.2, "optimal-cycle benchmark table, row 1"),
            cost_static=(14.4, "method-comparison table, row 1 (static control)"),
            cost_cycles_only=(8.4, "method-comparison table, row 1 (cycle control)"),
            reduction_vs_static=(51.0, "method-comparison table, row 1"),
        ),
    ),
    "table2_row2": ScenarioSpec(
        name="table2_row2",
        mean_interarrival=(1.7, 3.0),
        cycles=CycleConfig(min_green=(10.1, 10.6), max_green=(20.1, 11.9)),
        s0_list=((8.0, 8.0),),
        references=_refs(
            s_star_ipa=((4.8, 6.1), "optimal-cycle benchmark table, row 2"),
            cost_star_ipa=(14.9, "optimal-cycle benchmark table, row 2"),
            reduction_pct=((11.0,), "optimal-cycle benchmark table, row 2"),
            s_star_bf=((3.0, 8.0), "optimal-cycle benchmark table, row 2"),
            cost_star_bf=(15.7, "optimal-cycle benchmark table, row 2"),
            cost_static=(23.9, "method-comparison table, row 2 (static control)"),
            cost_cycles_only=(16.7, "method-comparison table, row 2 (cycle control)"),
            reduction_vs_static=(38.0, "method-comparison table, row 2"),
        ),
    ),
}


def cost_reduction(cost_initial: float, cost_final: float) -> float:
    """Percentage reduction of ``cost_final`` relative to ``cost_initial``."""
    if not cost_initial > 0:
        raise ValueError(f"initial cost must be positive: {cost_initial}")
    return 100.0 * (cost_initial - cost_final) / cost_initial


# ---------------------------------------------------------------------------
# Brute-force cost surface
# ---------------------------------------------------------------------------

@dataclass
class CostSurface:
    """Replication-averaged cost on a grid of threshold pairs."""

    s1_values: np.ndarray
    s2_values: np.ndarray
    mean_cost: np.ndarray   # shape (len(s1), len(s2))
    std_cost: np.ndarray
    replications: int

    @property
    def argmin_index(self) -> tuple[int, int]:
        flat = int(np.argmin(self.mean_cost))
        return np.unravel_index(flat, self.mean_cost.shape)

    @property
    def argmin_point(self) -> tuple[float, float]:
        i, j = self.argmin_index
        return (float(self.s1_values[i]), float(self.s2_values[j]))

    @property
    def argmin_cost(self) -> float:
        i, j = self.argmin_index
        return float(self.mean_cost[i, j])

    def cost_at(self, s1: float, s2: float) -> float:
        i = int(np.argmin(np.abs(self.s1_values - s1)))
        j = int(np.argmin(np.abs(self.s2_values - s2)))
        return float(self.mean_cost[i, j])

    def matrix_lines(self) -> list[str]:
        """Matrix layout: first row and column carry the grid values."""
        header = "s1\\s2," + ",".join(f"{v:g}" for v in self.s2_values)
        lines = [header]
        for i, v1 in enumerate(self.s1_values):
            row = ",".join(f"{self.mean_cost[i, j]:.6f}"
                           for j in range(len(self.s2_values)))
            lines.append(f"{v1:g},{row}")
        return lines


def _surface_cell(args: tuple[SimConfig, float, float, int, int]) -> tuple[float, float]:
    config, s1, s2, seed_base, replications = args
    costs = [
        sample_cost(simulate(config.with_thresholds(s1, s2).with_seed(seed_base + k)))
        for k in range(replications)
    ]
    return float(np.mean(costs)), float(np.std(costs, ddof=1)) if len(costs) > 1 else 0.0


def brute_force_surface(
    config: SimConfig,
    s1_values,
    s2_values,
    replications: int = 10,
    seed_base: int = 777_000,
    jobs: int = 1,
) -> CostSurface:
    """Evaluate the replication-mean cost at every grid point.

    Every point uses the same replication seed set (common random numbers),
    so the surface is smooth in the grid coordinates.  Points are independent
    tasks and evaluate in parallel when ``jobs > 1``.
    """
    s1_values = np.asarray(list(s1_values), dtype=float)
    s2_values = np.asarray(list(s2_values), dtype=float)
    if s1_values.size == 0 or s2_values.size == 0:
        raise ValueError("grid must be non-empty")
    tasks = [
        (config, float(v1), float(v2), seed_base, replications)
        for v1 in s1_values for v2 in s2_values
    ]
    results = pmap(_surface_cell, tasks, jobs)
    mean = np.empty((s1_values.size, s2_values.size))
    std = np.empty_like(mean)
    pos = 0
    for i in range(s1_values.size):
        for j in range(s2_values.size):
            mean[i, j], std[i, j] = results[pos]
            pos += 1
    return CostSurface(s1_values, s2_values, mean, std, replications)


# ---------------------------------------------------------------------------
# Scenario runs
# ---------------------------------------------------------------------------

@dataclass
class ScenarioRun:
    """One descent outcome inside a scenario report."""

    s0: tuple[float, float]
    result: OptRunRecord


@dataclass
class ScenarioReport:
    spec: ScenarioSpec
    profile: str
    runs: list[ScenarioRun]
    surface: CostSurface | None
    derived: dict = field(default_factory=dict)

    def text_lines(self) -> list[str]:
        sp = self.spec
        lines = [
            f"scenario {sp.name}  (profile={self.profile}, "
            f"switches={PROFILE_SWITCHES[self.profile]})",
            f"  mean interarrival: {sp.mean_interarrival}",
            f"  green bounds: min={sp.cycles.min_green} max={sp.cycles.max_green}",
        ]
        for run in self.runs:
            r = run.result
            lines.append(
                f"  from s0={run.s0}: s*=({r.s_star[0]:.2f}, {r.s_star[1]:.2f})  "
                f"J*={r.cost_star:.2f}  J0={r.cost_initial:.2f}  "
                f"R={r.reduction_pct:.1f}%  "
                f"({'converged' if r.converged else 'iteration cap'})"
            )
        if self.surface is not None:
            lines.append(
                f"  brute force: argmin={self.surface.argmin_point}  "
                f"cost={self.surface.argmin_cost:.2f}  "
                f"(grid {self.surface.s1_values[0]:g}..{self.surface.s1_values[-1]:g}, "
                f"{self.surface.replications} paths/point)"
            )
        for key, val in self.derived.items():
            lines.append(f"  {key}: {val:.1f}%")
        lines.append("  reference values:")
        for key, ref in self.spec.references.items():
            lines.append(f"    {key} = {ref.value}   [{ref.origin}]")
        return lines

    def csv_lines(self) -> list[str]:
        lines = ["scenario,s0_1,s0_2,s1_star,s2_star,J_star,J0,R_pct,converged"]
        for run in self.runs:
            r = run.result
            lines.append(
                f"{self.spec.name},{run.s0[0]:g},{run.s0[1]:g},"
                f"{r.s_star[0]:.4f},{r.s_star[1]:.4f},{r.cost_star:.4f},"
                f"{r.cost_initial:.4f},{r.reduction_pct:.2f},{int(r.converged)}"
            )
        return lines


def default_grid(lo: float = 1.0, hi: float = 15.0, step: float = 1.0) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def run_scenario(
    spec: ScenarioSpec,
    profile: str = "full",
    rule: StepRule | None = None,
    seed: int = 20_240_101,
    with_surface: bool = True,
    surface_replications: int = 10,
    jobs: int = 1,
) -> ScenarioReport:
    """Optimize from every listed start, run the grid search, derive reductions."""
    rule = rule or StepRule()
    config = spec.base_config(profile=profile, seed=seed)
    runs = []
    for k, s0 in enumerate(spec.s0_list):
        result = optimize(config, rule, s0, seed0=seed + 10_000 * (k + 1), jobs=jobs)
        runs.append(ScenarioRun(s0=s0, result=result))

    surface = None
    if with_surface:
        grid = default_grid()
        surface = brute_force_surface(
            config, grid, grid, replications=surface_replications,
            seed_base=seed + 555_000, jobs=jobs,
        )

    derived: dict = {}
    for run in runs:
        key = f"reduction_from_{run.s0[0]:g}_{run.s0[1]:g}"
        derived[key] = run.result.reduction_pct
    if "cost_static" in spec.references:
        j_static = spec.references["cost_static"].value
        j_here = runs[0].result.cost_star
        derived["reduction_vs_static"] = cost_reduction(j_static, j_here)
        j_cycles = spec.references["cost_cycles_only"].value
        derived["reduction_cycles_only_vs_static"] = cost_reduction(j_static, j_cycles)

    return ScenarioReport(spec=spec, profile=profile, runs=runs,
                          surface=surface, derived=derived)
