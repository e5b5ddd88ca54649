import math

import numpy as np
import pytest

from qdtlc.model import CycleConfig, ThresholdVector
from qdtlc.optimize import (
    StepRule,
    TRAJECTORY_HEADER,
    finite_difference_oracle,
    finite_difference_samples,
    gradient_step,
    mean_cost,
    optimize,
)
from qdtlc.simulate import RatePoint, SimConfig, sample_cost, simulate
from qdtlc.ipa import estimate_gradient

CYC = CycleConfig(min_green=(10.0, 10.0), max_green=(30.0, 30.0))


def small_config(**kw):
    base = dict(
        mean_interarrival=(2.0, 6.0), discharge_rate=1.0,
        thresholds=ThresholdVector(5.0, 5.0), cycles=CYC,
        stop_switches=120, seed=0,
    )
    base.update(kw)
    return SimConfig(**base)


class TestGradientStep:
    def test_plain_arithmetic(self):
        assert gradient_step((10.0, 1.0), (2.0, -1.0), 0.5) == (9.0, 1.5)

    def test_floor_clamp(self):
        assert gradient_step((0.2, 5.0), (10.0, 0.0), 0.05) == (0.1, 5.0)

    def test_zero_step_is_identity(self):
        assert gradient_step((3.0, 4.0), (7.0, -2.0), 0.0) == (3.0, 4.0)

    def test_rejects_negative_step(self):
        with pytest.raises(ValueError):
            gradient_step((3.0, 4.0), (1.0, 1.0), -0.1)


class TestStepRule:
    def test_harmonic_decay(self):
        rule = StepRule(rho0=2.0, decay="harmonic", kappa=50.0)
        assert rule.step_size(0) == 2.0
        assert rule.step_size(50) == pytest.approx(1.0)

    def test_constant(self):
        rule = StepRule(rho0=0.5, decay="constant")
        assert rule.step_size(123) == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            StepRule(rho0=0.0)
        with pytest.raises(ValueError):
            StepRule(decay="linear")
        with pytest.raises(ValueError):
            StepRule(s_min=0.0)


class TestOptimize:
    def test_seed_reproducibility(self):
        cfg = small_config()
        rule = StepRule(max_iterations=15, convergence_window=50)
        a = optimize(cfg, rule, (6.0, 3.0), seed0=77, final_replications=3)
        b = optimize(cfg, rule, (6.0, 3.0), seed0=77, final_replications=3)
        assert a.s_star == b.s_star
        assert a.cost_star == b.cost_star
        assert [it.s for it in a.iterations] == [it.s for it in b.iterations]

    def test_projection_floor_never_crossed(self):
        cfg = small_config()
        rule = StepRule(rho0=5.0, max_iterations=30, s_min=0.1,
                        convergence_window=100)
        rec = optimize(cfg, rule, (1.0, 1.0), seed0=5, final_replications=2)
        for it in rec.iterations:
            assert it.s[0] >= 0.1 and it.s[1] >= 0.1

    def test_iteration_seeds_follow_schedule(self):
        cfg = small_config()
        rule = StepRule(max_iterations=5, convergence_window=50)
        rec = optimize(cfg, rule, (5.0, 5.0), seed0=40, final_replications=2)
        assert [it.seed for it in rec.iterations] == [40, 41, 42, 43, 44]
        # the recorded cost/gradient match a rerun of the same path
        it = rec.iterations[2]
        path = simulate(cfg.with_thresholds(*it.s).with_seed(it.seed))
        assert sample_cost(path) == it.cost
        np.testing.assert_allclose(
            estimate_gradient(path).gradient, it.gradient)

    def test_trajectory_lines(self):
        cfg = small_config()
        rule = StepRule(max_iterations=4, convergence_window=50)
        rec = optimize(cfg, rule, (5.0, 5.0), seed0=40, final_replications=2)
        lines = rec.trajectory_lines()
        assert lines[0] == TRAJECTORY_HEADER
        assert len(lines) == 5
        assert lines[1].startswith("0,5.000000000,5.000000000,")

    def test_descends_from_bad_start(self):
        """From a clearly suboptimal start the terminal cost improves."""
        cfg = small_config(stop_switches=400)
        rule = StepRule(max_iterations=120, convergence_window=200)
        rec = optimize(cfg, rule, (10.0, 1.0), seed0=900,
                       final_replications=4)
        assert rec.cost_star < rec.cost_initial
        assert rec.reduction_pct > 20.0


class TestFiniteDifference:
    def test_zero_arrival_gradient_is_zero(self):
        cfg = small_config(mean_interarrival=(math.inf, math.inf),
                           stop_switches=4)
        grad = finite_difference_oracle(cfg, (5.0, 5.0), 0.5, 3, seed_base=1)
        np.testing.assert_allclose(grad, [0.0, 0.0])

    def test_fluid_fd_equals_ipa(self):
        sched = ((RatePoint(0.0, 0.5), RatePoint(70.0, 0.3)),
                 (RatePoint(0.0, 0.3),))
        cfg = SimConfig(
            mean_interarrival=(2.0, 3.0), discharge_rate=1.0,
            thresholds=ThresholdVector(2.0, 2.5),
            cycles=CycleConfig(min_green=(5.0, 5.0), max_green=(15.0, 15.0)),
            horizon=200.0, mode="fluid", fluid_schedule=sched,
        )
        ipa = estimate_gradient(simulate(cfg)).gradient
        fd = finite_difference_oracle(cfg, (2.0, 2.5), 1e-6, 1, seed_base=0)
        np.testing.assert_allclose(fd, ipa, rtol=1e-4, atol=1e-7)

    def test_crn_uses_matched_seeds(self):
        cfg = small_config(stop_switches=60)
        samples = finite_difference_samples(cfg, (5.0, 5.0), 0.5, 4,
                                            seed_base=123)
        assert samples.shape == (4, 2)
        # paired differencing keeps the spread far below the cost scale
        base = mean_cost(cfg, (5.0, 5.0), [123, 124, 125, 126])
        assert np.all(np.abs(samples) < 10 * max(base, 1.0))

    def test_rejects_invalid_delta(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            finite_difference_samples(cfg, (5.0, 5.0), 0.0, 2, seed_base=0)
        with pytest.raises(ValueError):
            finite_difference_samples(cfg, (0.3, 5.0), 0.5, 2, seed_base=0)
