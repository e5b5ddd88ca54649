#!/usr/bin/env python3
"""Gradient estimator validation: exact fluid checks and stochastic checks.

Part 1 draws randomized fluid configurations and compares the estimator
against central finite differences (these agree to floating-point levels).
Part 2 compares replication-averaged discrete-mode estimates against
common-random-number finite differences at a fixed operating point.

    python scripts/validate_gradients.py --replications 50 --jobs 2
"""
import argparse

import numpy as np

from qdtlc.experiments import SCENARIOS
from qdtlc.ipa import estimate_gradient
from qdtlc.model import CycleConfig, ThresholdVector
from qdtlc.optimize import finite_difference_samples
from qdtlc.simulate import RatePoint, SimConfig, sample_cost, simulate
from qdtlc._parallel import pmap


def random_fluid_config(rng: np.random.Generator) -> SimConfig:
    tmin = tuple(rng.uniform(3.0, 8.0, 2))
    tmax = tuple(t + rng.uniform(5.0, 18.0) for t in tmin)
    scheds = []
    for _ in (0, 1):
        t, pts = 0.0, [RatePoint(0.0, float(rng.uniform(0.05, 0.85)))]
        for _ in range(int(rng.integers(2, 6))):
            t += float(rng.uniform(15.0, 50.0))
            pts.append(RatePoint(t, float(rng.uniform(0.0, 0.85))))
        scheds.append(tuple(pts))
    return SimConfig(
        mean_interarrival=(2.0, 4.0),
        discharge_rate=1.0,
        thresholds=ThresholdVector(*rng.uniform(1.0, 5.0, 2)),
        cycles=CycleConfig(min_green=tmin, max_green=tmax),
        horizon=float(rng.uniform(150.0, 400.0)),
        mode="fluid",
        fluid_schedule=tuple(scheds),
        initial_green=int(rng.integers(0, 2)),
    )


def fluid_check(n_configs: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    worst, accepted = 0.0, 0
    while accepted < n_configs:
        cfg = random_fluid_config(rng)
        path = simulate(cfg)
        if path.switch_count < 4:
            continue
        grad = estimate_gradient(path).gradient
        s = cfg.thresholds.as_tuple()
        ok = True
        for i in (0, 1):
            sp, sm = list(s), list(s)
            sp[i] += 1e-6
            sm[i] -= 1e-6
            plus, minus = simulate(cfg.with_thresholds(*sp)), \
                simulate(cfg.with_thresholds(*sm))
            if [type(e).__name__ for e in plus.events] != \
                    [type(e).__name__ for e in minus.events]:
                ok = False
                break
            fd = (sample_cost(plus) - sample_cost(minus)) / 2e-6
            if abs(fd) < 1e-5:
                ok = False
                break
            worst = max(worst, abs(fd - grad[i]) / abs(fd))
        if ok:
            accepted += 1
    print(f"fluid: {accepted} configs, worst relative error {worst:.3e}")


def stochastic_check(replications: int, jobs: int, seed: int) -> None:
    cfg = SCENARIOS["scenarioA"].base_config(profile="fast", seed=seed)
    s = (5.0, 5.0)

    def ipa_one(k):
        path = simulate(cfg.with_thresholds(*s).with_seed(seed + k))
        return estimate_gradient(path).gradient

    ipa = np.array(pmap(ipa_one, range(replications), jobs))
    fd = finite_difference_samples(cfg, s, 0.5, replications, seed, jobs=jobs)
    for i in (0, 1):
        se = np.sqrt(ipa[:, i].var(ddof=1) / replications
                     + fd[:, i].var(ddof=1) / replications)
        print(f"  component {i}: IPA {ipa[:, i].mean():+.4f}  "
              f"FD {fd[:, i].mean():+.4f}  pooled SE {se:.4f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", type=int, default=20)
    ap.add_argument("--replications", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--seed", type=int, default=321)
    args = ap.parse_args()
    fluid_check(args.configs, args.seed)
    print("discrete (windowed estimator vs CRN finite differences):")
    stochastic_check(args.replications, args.jobs, args.seed)


if __name__ == "__main__":
    main()
