import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdtlc.model import TIME_EPS, CycleConfig, GuardKind, ThresholdVector
from qdtlc.simulate import (
    BusyEnd,
    BusyStart,
    RatePoint,
    SimConfig,
    SwitchEvent,
    estimate_rate,
    event_log_lines,
    sample_cost,
    simulate,
)

CYC = CycleConfig(min_green=(10.0, 10.0), max_green=(30.0, 30.0))


def make_config(**kw):
    base = dict(
        mean_interarrival=(2.0, 6.0),
        discharge_rate=1.0,
        thresholds=ThresholdVector(5.0, 5.0),
        cycles=CYC,
        stop_switches=200,
        seed=42,
    )
    base.update(kw)
    return SimConfig(**base)


class TestConfigValidation:
    def test_requires_exactly_one_stop_rule(self):
        with pytest.raises(ValueError):
            make_config(stop_switches=100, horizon=50.0)
        with pytest.raises(ValueError):
            make_config(stop_switches=None, horizon=None)

    def test_rejects_zero_measure_rules(self):
        with pytest.raises(ValueError):
            make_config(stop_switches=0, horizon=None)
        with pytest.raises(ValueError):
            make_config(stop_switches=None, horizon=-1.0)

    def test_rejects_bad_rates(self):
        with pytest.raises(ValueError):
            make_config(mean_interarrival=(0.0, 2.0))
        with pytest.raises(ValueError):
            make_config(discharge_rate=0.0)


class TestNoArrivals:
    """With empty roads the lights simply alternate at maximum green."""

    def test_switch_times_and_empty_queues(self):
        cfg = make_config(
            mean_interarrival=(math.inf, math.inf), stop_switches=4)
        path = simulate(cfg)
        times = [ev.time for ev in path.switches]
        assert times == [30.0, 60.0, 90.0, 120.0]
        assert all(ev.trigger is GuardKind.MAX_GREEN for ev in path.switches)
        assert path.integral_x == (0.0, 0.0)
        assert sample_cost(path) == 0.0
        assert path.busy_periods == ([], [])


def test_determinism_bit_identical():
    cfg = make_config(record_trace=True)
    a, b = simulate(cfg), simulate(cfg)
    assert a.horizon == b.horizon
    assert a.trace == b.trace
    assert [(e.time, type(e).__name__) for e in a.events] == \
           [(e.time, type(e).__name__) for e in b.events]
    assert event_log_lines(a) == event_log_lines(b)


def test_different_seeds_differ():
    a = simulate(make_config(seed=1))
    b = simulate(make_config(seed=2))
    assert a.horizon != b.horizon


def test_threshold_equivalence_classes():
    """Integer queue counts make any two thresholds with the same ceiling
    produce the identical path."""
    a = simulate(make_config(thresholds=ThresholdVector(4.6, 5.1)))
    b = simulate(make_config(thresholds=ThresholdVector(5.0, 6.0)))
    assert a.horizon == b.horizon
    assert [e.time for e in a.switches] == [e.time for e in b.switches]


class TestPathInvariants:
    @staticmethod
    def run_random(seed):
        rng = np.random.default_rng(seed)
        tmin = tuple(rng.uniform(3, 12, 2))
        tmax = tuple(t + rng.uniform(3, 25) for t in tmin)
        cfg = make_config(
            mean_interarrival=tuple(rng.uniform(1.2, 12, 2)),
            thresholds=ThresholdVector(*rng.uniform(0.5, 12, 2)),
            cycles=CycleConfig(min_green=tmin, max_green=tmax),
            stop_switches=int(rng.integers(50, 300)),
            seed=int(rng.integers(0, 2**31)),
            record_trace=True,
        )
        return cfg, simulate(cfg)

    @pytest.mark.parametrize("seed", range(12))
    def test_invariants(self, seed):
        cfg, path = self.run_random(seed)
        tmin, tmax = cfg.cycles.min_green, cfg.cycles.max_green

        # queue non-negativity at every trace row
        for row in path.trace:
            assert row[3] >= 0 and row[4] >= 0
            # exactly one running clock
            assert min(row[5], row[6]) == 0.0

        # min/max green honored for every completed green phase
        for ev in path.switches:
            g = ev.to_red
            assert ev.green_duration >= tmin[g] - 1e-9
            assert ev.green_duration <= tmax[g] + 1e-9
            if ev.trigger is GuardKind.MAX_GREEN:
                assert ev.green_duration == pytest.approx(tmax[g], abs=1e-9)
            if ev.trigger is GuardKind.MIN_GREEN:
                assert ev.green_duration == pytest.approx(tmin[g], abs=1e-9)
            else:
                pass

        # switch guard semantics
        s = cfg.thresholds
        for ev in path.switches:
            if ev.trigger is GuardKind.THRESHOLD_UP:
                r = ev.trigger_road
                assert r == ev.to_green
                assert ev.x[r] >= s[r] > ev.x[r] - 1
                assert ev.x[ev.to_red] < s[ev.to_red]
                assert ev.green_duration > tmin[ev.to_red] - 1e-9
            elif ev.trigger is GuardKind.THRESHOLD_DOWN:
                r = ev.trigger_road
                assert r == ev.to_red
                assert ev.x[r] < s[r] <= ev.x[r] + 1
                assert ev.x[ev.to_green] >= s[ev.to_green]

        # busy periods: disjoint, ordered, bracketed by start/end events
        for road in (0, 1):
            periods = path.busy_periods[road]
            for p in periods:
                assert p.start < p.end <= path.horizon
            for p, q in zip(periods, periods[1:]):
                assert p.end <= q.start
            assert sum(1 for p in periods if p.truncated) <= 1

        # busy bracketing in the event stream: starts and ends alternate
        open_ = [False, False]
        for ev in path.events:
            if isinstance(ev, BusyStart):
                assert not open_[ev.road]
                open_[ev.road] = True
            elif isinstance(ev, BusyEnd):
                assert open_[ev.road]
                open_[ev.road] = False

        # cost integral matches a recomputation from the trace
        integ = [0.0, 0.0]
        last_t = 0.0
        x = [round(cfg.initial_queues[0]), round(cfg.initial_queues[1])]
        for row in path.trace:
            t = row[0]
            integ[0] += x[0] * (t - last_t)
            integ[1] += x[1] * (t - last_t)
            x = [row[3], row[4]]
            last_t = t
        integ[0] += x[0] * (path.horizon - last_t)
        integ[1] += x[1] * (path.horizon - last_t)
        assert path.integral_x[0] == pytest.approx(integ[0], rel=1e-12)
        assert path.integral_x[1] == pytest.approx(integ[1], rel=1e-12)


class TestEstimateRate:
    def test_manual_window_count(self):
        path = simulate(make_config(stop_switches=100, seed=5))
        t, w = 200.0, 40.0
        arr = path.arrivals[0]
        expected = np.sum((arr >= t - w / 2) & (arr <= t + w / 2)) / w
        assert estimate_rate(path, 0, t, w) == pytest.approx(expected)

    def test_zero_when_no_arrivals(self):
        path = simulate(make_config(
            mean_interarrival=(math.inf, math.inf), stop_switches=3))
        assert estimate_rate(path, 0, 45.0, 10.0) == 0.0

    def test_boundary_clipping(self):
        path = simulate(make_config(stop_switches=100, seed=6))
        w = 30.0
        arr = path.arrivals[1]
        expected = np.sum(arr <= w / 2) / (w / 2)
        assert estimate_rate(path, 1, 0.0, w) == pytest.approx(expected)

    def test_matches_generator_rate(self):
        """Windowed estimate is within 3 standard deviations of the true rate."""
        cfg = make_config(mean_interarrival=(2.0, 6.0), stop_switches=None,
                          horizon=2000.0, seed=11)
        path = simulate(cfg)
        w = 200.0
        est = estimate_rate(path, 0, 1000.0, w)
        assert abs(est - 0.5) <= 3 * math.sqrt(0.5 / w)

    def test_rejects_bad_window(self):
        path = simulate(make_config(stop_switches=10))
        with pytest.raises(ValueError):
            estimate_rate(path, 0, 10.0, 0.0)


class TestFluidMode:
    def test_triangle_oracle(self):
        """Single busy period: fill 2 s at rate 1, drain at net rate 1.

        The queue rises 0 -> 2 over [0, 2] and falls 2 -> 0 over [2, 4]:
        two triangles of area 2 each, so the road-0 integral is 4 and the
        weighted time average over T=10 is 0.4.
        """
        cfg = SimConfig(
            mean_interarrival=(1.0, math.inf),
            discharge_rate=2.0,
            thresholds=ThresholdVector(5.0, 5.0),
            cycles=CycleConfig(min_green=(1.0, 1.0), max_green=(20.0, 2.0)),
            weights=(1.0, 0.0),
            horizon=10.0,
            mode="fluid",
            initial_green=1,
        )
        path = simulate(cfg)
        assert path.switch_count == 1
        assert path.switches[0].time == pytest.approx(2.0)
        assert path.integral_x[0] == pytest.approx(4.0, abs=1e-9)
        assert sample_cost(path) == pytest.approx(0.4, abs=1e-10)
        periods = path.busy_periods[0]
        assert len(periods) == 1
        assert periods[0].start == pytest.approx(0.0)
        assert periods[0].end == pytest.approx(4.0)

    def test_flow_conservation_per_busy_period(self):
        """Queues start and end every completed busy period at zero."""
        sched = (
            (RatePoint(0.0, 0.6), RatePoint(50.0, 0.2), RatePoint(110.0, 0.7)),
            (RatePoint(0.0, 0.3), RatePoint(80.0, 0.45)),
        )
        cfg = SimConfig(
            mean_interarrival=(2.0, 3.0),
            discharge_rate=1.0,
            thresholds=ThresholdVector(2.0, 3.0),
            cycles=CycleConfig(min_green=(5.0, 5.0), max_green=(18.0, 18.0)),
            horizon=300.0,
            mode="fluid",
            fluid_schedule=sched,
            record_trace=True,
        )
        path = simulate(cfg)
        assert path.switch_count > 4
        by_time = {}
        for row in path.trace:
            by_time.setdefault(row[0], row)
        for road in (0, 1):
            for p in path.busy_periods[road]:
                if p.truncated:
                    continue
                end_row = by_time[p.end]
                assert end_row[3 + road] == pytest.approx(0.0, abs=1e-9)

    def test_fluid_determinism(self):
        sched = ((RatePoint(0.0, 0.5),), (RatePoint(0.0, 0.25),))
        cfg = SimConfig(
            mean_interarrival=(2.0, 4.0), discharge_rate=1.0,
            thresholds=ThresholdVector(2.0, 2.0), cycles=CYC,
            horizon=400.0, mode="fluid", fluid_schedule=sched,
        )
        a, b = simulate(cfg), simulate(cfg)
        assert [e.time for e in a.events] == [e.time for e in b.events]

    def test_discrete_refines_to_fluid(self):
        """Scaling vehicle granularity 10x brings the discrete cost within
        10% of the fluid cost of the same macroscopic configuration."""
        k = 10.0
        fluid = SimConfig(
            mean_interarrival=(2.5, 5.0), discharge_rate=1.0,
            thresholds=ThresholdVector(3.0, 2.0),
            cycles=CycleConfig(min_green=(8.0, 8.0), max_green=(24.0, 24.0)),
            horizon=4000.0, mode="fluid",
        )
        j_fluid = sample_cost(simulate(fluid))
        costs = []
        for seed in range(4):
            disc = SimConfig(
                mean_interarrival=(2.5 / k, 5.0 / k), discharge_rate=k,
                thresholds=ThresholdVector(3.0 * k, 2.0 * k),
                cycles=fluid.cycles, horizon=4000.0, seed=seed,
            )
            costs.append(sample_cost(simulate(disc)) / k)
        assert np.mean(costs) == pytest.approx(j_fluid, rel=0.10)


class TestEventLog:
    def test_format_and_columns(self):
        cfg = make_config(stop_switches=20, record_trace=True)
        lines = event_log_lines(simulate(cfg))
        assert lines[0] == "time,kind,road,x1,x2,z1,z2,u"
        for line in lines[1:]:
            cols = line.split(",")
            assert len(cols) == 8
            float(cols[0])
            assert cols[2] in ("1", "2")
            assert cols[7] in ("1", "2")
        times = [float(l.split(",")[0]) for l in lines[1:]]
        assert times == sorted(times)

    def test_requires_trace(self):
        path = simulate(make_config(stop_switches=5))
        with pytest.raises(ValueError):
            event_log_lines(path)


def test_switch_events_are_enriched():
    path = simulate(make_config(stop_switches=50))
    for ev in path.events:
        if isinstance(ev, SwitchEvent):
            assert not math.isnan(ev.alpha[0]) and not math.isnan(ev.alpha[1])
            assert ev.discharge == 1.0
        elif isinstance(ev, BusyStart):
            assert not math.isnan(ev.alpha)
