#!/usr/bin/env python3
"""Reproduce the fixed-cycle benchmark scenarios (threshold descent + grid search).

Runs both traffic scenarios (high/low and high/high) from their published
starting points, evaluates the brute-force cost surface, and writes the
reports next to the trajectories.

    python scripts/run_fixed_cycle_benchmarks.py --profile fast --jobs 2 --out runs
"""
import argparse
from pathlib import Path

from qdtlc.cli import load_config
from qdtlc.experiments import SCENARIOS, run_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--profile", choices=("fast", "full"), default="fast")
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int, default=20_240_101)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("scenarioA", "scenarioB"):
        report = run_scenario(
            SCENARIOS[name], profile=args.profile, seed=args.seed,
            jobs=args.jobs,
        )
        text = "\n".join(report.text_lines())
        print(text, end="\n\n")
        (out / f"{name}_report.txt").write_text(text + "\n")
        (out / f"{name}_report.csv").write_text(
            "\n".join(report.csv_lines()) + "\n")
        if report.surface is not None:
            (out / f"{name}_surface.csv").write_text(
                "\n".join(report.surface.matrix_lines()) + "\n")


if __name__ == "__main__":
    main()
