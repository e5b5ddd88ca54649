"""Command-line interface: simulate / gradient / optimize / surface / scenario.

All subcommands read a flat INI-style configuration (see ``print-config``)
naming rates, thresholds, cycle bounds, the stop rule and the seed.  Built-in
scenario names (``scenarioA``, ``scenarioB``, ``table2_row1``,
``table2_row2``) resolve to packaged config files carrying the benchmark
constants.  Every output file starts with a comment line naming the config
hash and seed, so a result is reproducible from its artifacts alone.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 simulation
failure, 5 estimator fault.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .experiments import (
    PROFILE_SWITCHES,
    SCENARIOS,
    brute_force_surface,
    default_grid,
    run_scenario,
)
from .ipa import GRADIENT_RECORD_HEADER, EstimatorFault, estimate_gradient
from .model import CycleConfig, ThresholdVector
from .optimize import StepRule, optimize
from .simulate import (
    RatePoint,
    SimConfig,
    SimulationStall,
    event_log_lines,
    sample_cost,
    simulate,
)

EXIT_CONFIG = 3
EXIT_SIMULATION = 4
EXIT_ESTIMATOR = 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed configuration: simulation settings plus tool parameters."""

    sim: SimConfig
    rule: StepRule
    s0: tuple[float, float]
    grid_min: float = 1.0
    grid_max: float = 15.0
    grid_step: float = 1.0
    surface_replications: int = 10

    def config_text(self) -> str:
        return emit_config(self)

    def config_hash(self) -> str:
        return hashlib.sha256(self.config_text().encode()).hexdigest()[:12]


def _get(cp: configparser.ConfigParser, section: str, key: str, cast, default=None):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def parse_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    def fl(sec, key, default=None):
        return _get(cp, sec, key, float, default)

    mean_ia = (fl("arrivals", "mean_interarrival_1"),
               fl("arrivals", "mean_interarrival_2"))
    mean_ia = tuple(math.inf if v == 0 else v for v in mean_ia)

    try:
        thresholds = ThresholdVector(fl("thresholds", "s1"), fl("thresholds", "s2"))
        cycles = CycleConfig(
            min_green=(fl("cycles", "min_green_1"), fl("cycles", "min_green_2")),
            max_green=(fl("cycles", "max_green_1"), fl("cycles", "max_green_2")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    stop_switches = _get(cp, "run", "stop_switches", int, 0) or None
    horizon = fl("run", "horizon", 0.0) or None
    mode = _get(cp, "run", "mode", str, "discrete").strip()
    try:
        sim = SimConfig(
            mean_interarrival=mean_ia,
            discharge_rate=fl("service", "discharge_rate", 1.0),
            thresholds=thresholds,
            cycles=cycles,
            weights=(fl("run", "weight_1", 1.0), fl("run", "weight_2", 1.0)),
            stop_switches=stop_switches,
            horizon=horizon,
            seed=_get(cp, "run", "seed", int, 12345),
            mode=mode,
            rate_window=fl("run", "rate_window", 10.0),
            initial_green=_get(cp, "run", "initial_green", int, 1) - 1,
            startup_lag=fl("run", "startup_lag", 0.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        rule = StepRule(
            rho0=fl("optimize", "rho0", 2.0),
            decay=_get(cp, "optimize", "decay", str, "harmonic").strip(),
            kappa=fl("optimize", "kappa", 50.0),
            s_min=fl("optimize", "s_min", 0.1),
            max_iterations=_get(cp, "optimize", "max_iterations", int, 800),
            convergence_tol=fl("optimize", "convergence_tol", 0.05),
            convergence_window=_get(cp, "optimize", "convergence_window", int, 20),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    s0 = (fl("optimize", "s0_1", thresholds.s1), fl("optimize", "s0_2", thresholds.s2))
    return RunConfig(
        sim=sim,
        rule=rule,
        s0=s0,
        grid_min=fl("surface", "grid_min", 1.0),
        grid_max=fl("surface", "grid_max", 15.0),
        grid_step=fl("surface", "grid_step", 1.0),
        surface_replications=_get(cp, "surface", "replications", int, 10),
    )


def emit_config(rc: RunConfig) -> str:
    """Render a RunConfig back to config text (parse/emit round-trips)."""
    sim = rc.sim
    mi = tuple(0.0 if math.isinf(v) else v for v in sim.mean_interarrival)
    lines = [
        "[arrivals]",
        f"mean_interarrival_1 = {mi[0]:g}",
        f"mean_interarrival_2 = {mi[1]:g}",
        "",
        "[service]",
        f"discharge_rate = {sim.discharge_rate:g}",
        "",
        "[thresholds]",
        f"s1 = {sim.thresholds.s1:g}",
        f"s2 = {sim.thresholds.s2:g}",
        "",
        "[cycles]",
        f"min_green_1 = {sim.cycles.min_green[0]:g}",
        f"max_green_1 = {sim.cycles.max_green[0]:g}",
        f"min_green_2 = {sim.cycles.min_green[1]:g}",
        f"max_green_2 = {sim.cycles.max_green[1]:g}",
        "",
        "[run]",
        f"weight_1 = {sim.weights[0]:g}",
        f"weight_2 = {sim.weights[1]:g}",
        f"stop_switches = {sim.stop_switches or 0}",
        f"horizon = {sim.horizon or 0:g}",
        f"seed = {sim.seed}",
        f"mode = {sim.mode}",
        f"rate_window = {sim.rate_window:g}",
        f"initial_green = {sim.initial_green + 1}",
        f"startup_lag = {sim.startup_lag:g}",
        "",
        "[optimize]",
        f"rho0 = {rc.rule.rho0:g}",
        f"decay = {rc.rule.decay}",
        f"kappa = {rc.rule.kappa:g}",
        f"s_min = {rc.rule.s_min:g}",
        f"max_iterations = {rc.rule.max_iterations}",
        f"convergence_tol = {rc.rule.convergence_tol:g}",
        f"convergence_window = {rc.rule.convergence_window}",
        f"s0_1 = {rc.s0[0]:g}",
        f"s0_2 = {rc.s0[1]:g}",
        "",
        "[surface]",
        f"grid_min = {rc.grid_min:g}",
        f"grid_max = {rc.grid_max:g}",
        f"grid_step = {rc.grid_step:g}",
        f"replications = {rc.surface_replications}",
        "",
    ]
    return "\n".join(lines)


def load_config(name_or_path: str) -> RunConfig:
    """Load a packaged scenario by name, or any config file by path."""
    if name_or_path in SCENARIOS:
        text = (resources.files("qdtlc") / "scenarios"
                / f"{name_or_path}.cfg").read_text()
        return parse_config_text(text)
    p = Path(name_or_path)
    if not p.exists():
        raise ConfigError(
            f"config {name_or_path!r} is neither a packaged scenario "
            f"({', '.join(SCENARIOS)}) nor an existing file"
        )
    return parse_config_text(p.read_text())


def _apply_overrides(rc: RunConfig, args: argparse.Namespace) -> RunConfig:
    sim = rc.sim
    if getattr(args, "seed", None) is not None:
        sim = sim.with_seed(args.seed)
    if getattr(args, "s1", None) is not None or getattr(args, "s2", None) is not None:
        s1 = args.s1 if args.s1 is not None else sim.thresholds.s1
        s2 = args.s2 if args.s2 is not None else sim.thresholds.s2
        try:
            sim = sim.with_thresholds(s1, s2)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rc = replace(rc, s0=(s1, s2))
    if getattr(args, "switches", None) is not None:
        sim = replace(sim, stop_switches=args.switches, horizon=None)
    if getattr(args, "horizon", None) is not None:
        sim = replace(sim, horizon=args.horizon, stop_switches=None)
    return replace(rc, sim=sim)


def _header(rc: RunConfig) -> str:
    return f"# config_hash={rc.config_hash()} seed={rc.sim.seed}"


def _write(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def cmd_simulate(rc: RunConfig, args) -> int:
    sim = replace(rc.sim, record_trace=True)
    path = simulate(sim)
    out = Path(args.out) / f"eventlog_{args.tag}.csv"
    _write(out, [_header(rc)] + event_log_lines(path))
    cost = sample_cost(path)
    print(f"simulate: T={path.horizon:.1f}s switches={path.switch_count} "
          f"cost={cost:.4f} -> {out}")
    return 0


def cmd_gradient(rc: RunConfig, args) -> int:
    path = simulate(rc.sim)
    est = estimate_gradient(path)
    out = Path(args.out) / "gradient_records.csv"
    line = est.record_line(rc.sim.thresholds.as_tuple(), rc.sim.seed)
    if not out.exists():
        _write(out, [_header(rc), GRADIENT_RECORD_HEADER, line])
    else:
        with out.open("a") as fh:
            fh.write(line + "\n")
    g = est.gradient
    print(f"gradient: dL/ds=({g[0]:+.5f}, {g[1]:+.5f}) "
          f"T={path.horizon:.1f}s -> {out}")
    return 0


def cmd_optimize(rc: RunConfig, args) -> int:
    rec = optimize(rc.sim, rc.rule, rc.s0, jobs=args.jobs)
    out = Path(args.out) / f"trajectory_{args.tag}.csv"
    _write(out, [_header(rc)] + rec.trajectory_lines())
    print(f"optimize: s*=({rec.s_star[0]:.3f}, {rec.s_star[1]:.3f}) "
          f"J*={rec.cost_star:.4f} J0={rec.cost_initial:.4f} "
          f"R={rec.reduction_pct:.1f}% iters={len(rec.iterations)} "
          f"{'converged' if rec.converged else 'hit-cap'} -> {out}")
    return 0


def cmd_surface(rc: RunConfig, args) -> int:
    grid = default_grid(rc.grid_min, rc.grid_max, rc.grid_step)
    surf = brute_force_surface(
        rc.sim, grid, grid, replications=rc.surface_replications,
        seed_base=rc.sim.seed + 555_000, jobs=args.jobs,
    )
    out = Path(args.out) / f"surface_{args.tag}.csv"
    _write(out, [_header(rc)] + surf.matrix_lines())
    p = surf.argmin_point
    print(f"surface: argmin=({p[0]:g}, {p[1]:g}) cost={surf.argmin_cost:.4f} "
          f"grid={rc.grid_min:g}..{rc.grid_max:g} -> {out}")
    return 0


def cmd_scenario(rc: RunConfig, args) -> int:
    if args.name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {args.name!r}; "
                          f"choose from {', '.join(SCENARIOS)}")
    spec = SCENARIOS[args.name]
    report = run_scenario(
        spec, profile=args.profile, rule=rc.rule, seed=rc.sim.seed,
        with_surface=not args.no_surface,
        surface_replications=rc.surface_replications, jobs=args.jobs,
    )
    out_txt = Path(args.out) / f"scenario_{args.name}.txt"
    out_csv = Path(args.out) / f"scenario_{args.name}.csv"
    _write(out_txt, [_header(rc)] + report.text_lines())
    _write(out_csv, [_header(rc)] + report.csv_lines())
    for line in report.text_lines():
        print(line)
    print(f"-> {out_txt}, {out_csv}")
    return 0


def cmd_print_config(rc: RunConfig, args) -> int:
    sys.stdout.write(rc.config_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qdtlc",
        description="Threshold-feedback traffic light control: simulation, "
                    "gradient estimation, and optimization.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, s_flags=True):
        sp.add_argument("--config", required=True,
                        help="packaged scenario name or config file path")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="runs", help="output directory")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--tag", default="run", help="output-file suffix")
        if s_flags:
            sp.add_argument("--s1", type=float, default=None)
            sp.add_argument("--s2", type=float, default=None)
            sp.add_argument("--switches", type=int, default=None)
            sp.add_argument("--horizon", type=float, default=None)

    common(sub.add_parser("simulate", help="one sample path -> event log"))
    common(sub.add_parser("gradient", help="one path -> gradient record"))
    common(sub.add_parser("optimize", help="threshold descent -> trajectory"))
    common(sub.add_parser("surface", help="grid search -> cost matrix"))

    sp = sub.add_parser("scenario", help="full benchmark reproduction")
    sp.add_argument("name", choices=list(SCENARIOS))
    common(sp, s_flags=False)
    sp.add_argument("--profile", choices=list(PROFILE_SWITCHES), default="fast")
    sp.add_argument("--no-surface", action="store_true")

    sp = sub.add_parser("print-config", help="emit the resolved config")
    common(sp)
    return p


HANDLERS = {
    "simulate": cmd_simulate,
    "gradient": cmd_gradient,
    "optimize": cmd_optimize,
    "surface": cmd_surface,
    "scenario": cmd_scenario,
    "print-config": cmd_print_config,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args.config)
        rc = _apply_overrides(rc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return HANDLERS[args.command](rc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationStall as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except EstimatorFault as exc:
        print(f"estimator fault: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR


if __name__ == "__main__":
    sys.exit(main())
