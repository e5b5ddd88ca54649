"""Sample-path generation for the threshold-controlled intersection.

Two simulation modes share one event vocabulary and one output format:

* ``discrete`` - vehicle-granular: Poisson arrival streams per road, integer
  queue counts, deterministic departure headways ``1/H`` while a road is green
  and non-empty.  This is the mode used for all benchmark experiments.
* ``fluid`` - queue content evolves piecewise-linearly under piecewise-
  constant arrival-rate schedules; every guard time is found by exact root
  finding on linear segments.  Deterministic, so it serves as the exact
  oracle when validating the gradient estimator against finite differences.

A :class:`SamplePath` records the light switches, busy-period boundaries and
per-road arrival times, along with the exact time integral of each queue.
Switch and busy-start records are enriched with the arrival rate in effect at
the event (a windowed count estimate in discrete mode, the exact schedule
value in fluid mode) so downstream consumers never re-scan the path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .model import (
    TIME_EPS,
    CycleConfig,
    GuardKind,
    ThresholdVector,
    other,
)

# Queue contents below this are treated as empty in fluid mode.
QUEUE_EPS = 1e-12

# Consecutive zero-gap events tolerated before declaring the loop stuck.
_STALL_LIMIT = 10_000


class SimulationStall(RuntimeError):
    """Event loop stopped advancing (repeated events closer than 1e-12 s)."""


@dataclass(frozen=True)
class RatePoint:
    """One piece of a piecewise-constant arrival-rate schedule."""

    start: float
    rate: float


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one sample path.

    ``mean_interarrival[n]`` is the mean spacing of road ``n`` arrivals in
    seconds (``math.inf`` disables arrivals).  ``discharge_rate`` is the
    saturation outflow of a green, non-empty road, vehicles/second.  Exactly
    one of ``stop_switches`` / ``horizon`` must be set.
    """

    mean_interarrival: tuple[float, float]
    discharge_rate: float
    thresholds: ThresholdVector
    cycles: CycleConfig
    weights: tuple[float, float] = (1.0, 1.0)
    stop_switches: int | None = None
    horizon: float | None = None
    seed: int = 0
    mode: Literal["discrete", "fluid"] = "discrete"
    rate_window: float = 10.0
    initial_green: int = 0
    initial_queues: tuple[float, float] = (0.0, 0.0)
    fluid_schedule: tuple[tuple[RatePoint, ...], tuple[RatePoint, ...]] | None = None
    record_trace: bool = False
    stochastic_headways: bool = False
    # Start-up lost time: a queued platoon's first vehicle clears this many
    # seconds after its green begins, before regular headways resume
    # (discrete mode only; vehicles reaching an empty green road roll through
    # on plain headways).
    startup_lag: float = 0.0

    def __post_init__(self) -> None:
        for n in (0, 1):
            if not self.mean_interarrival[n] > 0:
                raise ValueError(
                    f"mean interarrival on road {n} must be positive "
                    f"(use inf for no arrivals): {self.mean_interarrival[n]}"
                )
        if not self.discharge_rate > 0:
            raise ValueError(f"discharge rate must be positive: {self.discharge_rate}")
        if (self.stop_switches is None) == (self.horizon is None):
            raise ValueError("set exactly one of stop_switches / horizon")
        if self.stop_switches is not None and self.stop_switches < 1:
            raise ValueError(f"stop_switches must be >= 1: {self.stop_switches}")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError(f"horizon must be positive: {self.horizon}")
        if self.mode not in ("discrete", "fluid"):
            raise ValueError(f"unknown mode: {self.mode}")
        if self.initial_green not in (0, 1):
            raise ValueError(f"initial_green must be 0 or 1: {self.initial_green}")
        if not self.rate_window > 0:
            raise ValueError(f"rate_window must be positive: {self.rate_window}")
        if self.startup_lag < 0:
            raise ValueError(f"startup_lag must be nonnegative: {self.startup_lag}")
        if any(q < 0 for q in self.initial_queues):
            raise ValueError(f"initial queues must be nonnegative: {self.initial_queues}")
        if self.fluid_schedule is not None:
            for sched in self.fluid_schedule:
                if not sched or sched[0].start != 0.0:
                    raise ValueError("each fluid schedule must start at t=0")
                starts = [p.start for p in sched]
                if starts != sorted(starts):
                    raise ValueError("fluid schedule breakpoints must be sorted")
                if any(p.rate < 0 for p in sched):
                    raise ValueError("fluid schedule rates must be nonnegative")

    def with_thresholds(self, s1: float, s2: float) -> "SimConfig":
        return replace(self, thresholds=ThresholdVector(s1, s2))

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


@dataclass
class SwitchEvent:
    """One light switch: road ``to_red`` loses green, ``to_green`` gains it."""

    time: float
    index: int                 # 1-based position in the switch sequence
    to_red: int
    to_green: int
    trigger: GuardKind
    trigger_road: int
    x: tuple[float, float]     # queue contents at the switch instant
    green_duration: float      # length of the green phase that just ended
    alpha: tuple[float, float] = (math.nan, math.nan)
    discharge: float = math.nan


@dataclass
class BusyStart:
    """A queue turns non-empty.

    ``induced_by_switch`` is the index of the switch that started the current
    red phase when the queue fills while red; ``None`` marks an exogenous
    start (arrival to an empty green road, rate turning on, or initial load).
    """

    time: float
    road: int
    induced_by_switch: int | None = None
    alpha: float = math.nan


@dataclass
class BusyEnd:
    """A queue drains to empty."""

    time: float
    road: int


@dataclass(frozen=True)
class BusyPeriod:
    """Maximal interval over which one queue is strictly positive."""

    road: int
    start: float
    end: float
    induced_by_switch: int | None
    truncated: bool = False


@dataclass
class SamplePath:
    """Timestamped record of one simulation run."""

    config: SimConfig
    horizon: float
    switch_count: int
    events: list                       # SwitchEvent | BusyStart | BusyEnd, time-ordered
    arrivals: tuple[np.ndarray, np.ndarray]
    integral_x: tuple[float, float]    # exact per-road integral of queue content
    busy_periods: tuple[list[BusyPeriod], list[BusyPeriod]]
    trace: list | None = None          # optional (t, kind, road, x0, x1, z0, z1, green)

    @property
    def switches(self) -> list[SwitchEvent]:
        return [e for e in self.events if isinstance(e, SwitchEvent)]


def estimate_rate(path: SamplePath, road: int, t: float, window: float) -> float:
    """Windowed arrival-rate estimate at time ``t``, vehicles/second.

    Counts road arrivals in a window centered at ``t``, clipped to the path
    horizon; the divisor is the clipped width.
    """
    if window <= 0:
        raise ValueError(f"window must be positive: {window}")
    lo = max(0.0, t - window / 2.0)
    hi = min(path.horizon, t + window / 2.0)
    if hi <= lo:
        return 0.0
    times = path.arrivals[road]
    n = np.searchsorted(times, hi, side="right") - np.searchsorted(times, lo, side="left")
    return float(n) / (hi - lo)


def sample_cost(path: SamplePath, weights: tuple[float, float] | None = None,
                horizon: float | None = None) -> float:
    """Time-averaged weighted queue content over the path."""
    w = weights if weights is not None else path.config.weights
    T = horizon if horizon is not None else path.horizon
    return (w[0] * path.integral_x[0] + w[1] * path.integral_x[1]) / T


def schedule_rate(sched: tuple[RatePoint, ...], t: float) -> float:
    """Arrival rate in effect at time ``t`` for one piecewise-constant schedule."""
    rate = sched[0].rate
    for p in sched:
        if p.start <= t + TIME_EPS:
            rate = p.rate
        else:
            break
    return rate


def simulate(config: SimConfig) -> SamplePath:
    """Generate one sample path under the threshold controller.

    Identical config (including seed) always yields an identical path.
    """
    if config.mode == "discrete":
        return _simulate_discrete(config)
    return _simulate_fluid(config)


# ---------------------------------------------------------------------------
# Discrete (vehicle-granular) engine
# ---------------------------------------------------------------------------

_CHUNK = 4096


class _ArrivalStream:
    """Chunked pre-generation of one road's Poisson arrival times.

    The stream is a pure function of its generator state, independent of the
    simulation state, so runs at perturbed thresholds under the same seed see
    identical arrivals (common random numbers).
    """

    def __init__(self, rng: np.random.Generator, mean: float,
                 exponential: bool = True):
        self._rng = rng
        self._mean = mean
        self._times = np.empty(0)
        self._consumed = 0
        self._tail = 0.0
        if math.isinf(mean):
            self._times = np.array([math.inf])

    def _extend(self) -> None:
        gaps = self._rng.exponential(self._mean, size=_CHUNK)
        new = self._tail + np.cumsum(gaps)
        self._tail = float(new[-1])
        self._times = np.concatenate([self._times[self._consumed:], new])
        self._consumed = 0

    def peek(self) -> float:
        if self._consumed >= len(self._times):
            if math.isinf(self._mean):
                return math.inf
            self._extend()
        return float(self._times[self._consumed])

    def pop(self) -> float:
        t = self.peek()
        self._consumed += 1
        return t


def _simulate_discrete(cfg: SimConfig) -> SamplePath:
    ss = np.random.SeedSequence(cfg.seed)
    child_a, child_b, child_h = ss.spawn(3)
    streams = (
        _ArrivalStream(np.random.default_rng(child_a), cfg.mean_interarrival[0]),
        _ArrivalStream(np.random.default_rng(child_b), cfg.mean_interarrival[1]),
    )
    headway_rng = np.random.default_rng(child_h) if cfg.stochastic_headways else None

    H = cfg.discharge_rate
    base_headway = 1.0 / H

    def next_headway() -> float:
        if headway_rng is None:
            return base_headway
        return float(headway_rng.exponential(base_headway))

    s = cfg.thresholds.as_tuple()
    tmin = cfg.cycles.min_green
    tmax = cfg.cycles.max_green

    lag = cfg.startup_lag
    counts = [int(round(cfg.initial_queues[0])), int(round(cfg.initial_queues[1]))]
    green = cfg.initial_green
    green_start = 0.0
    min_pending = True
    dep_time = lag + next_headway() if counts[green] > 0 else math.inf

    n_stop = cfg.stop_switches if cfg.stop_switches is not None else None
    t_stop = cfg.horizon if cfg.horizon is not None else math.inf

    t = 0.0
    last_t = 0.0
    integ = [0.0, 0.0]
    switch_count = 0
    events: list = []
    arrivals_log: tuple[list, list] = ([], [])
    open_start: list[float | None] = [None, None]
    open_induced: list[int | None] = [None, None]
    last_red_switch: list[int | None] = [None, None]
    periods: tuple[list, list] = ([], [])
    trace: list | None = [] if cfg.record_trace else None
    stall = 0

    for r in (0, 1):
        if counts[r] > 0:
            open_start[r] = 0.0
            open_induced[r] = None
            events.append(BusyStart(0.0, r, None))

    def snap(kind: str, road: int) -> None:
        zg = t - green_start
        z = (zg, 0.0) if green == 0 else (0.0, zg)
        trace.append((t, kind, road, counts[0], counts[1], z[0], z[1], green))

    def do_switch(trigger: GuardKind, trigger_road: int) -> None:
        nonlocal green, green_start, min_pending, dep_time, switch_count
        switch_count += 1
        old = green
        new = other(green)
        events.append(SwitchEvent(
            time=t, index=switch_count, to_red=old, to_green=new,
            trigger=trigger, trigger_road=trigger_road,
            x=(counts[0], counts[1]), green_duration=t - green_start,
            discharge=H,
        ))
        last_red_switch[old] = switch_count
        green = new
        green_start = t
        min_pending = True
        dep_time = t + lag + next_headway() if counts[new] > 0 else math.inf
        if trace is not None:
            snap("G2R", old)
            snap("R2G", new)

    while True:
        if n_stop is not None and switch_count >= n_stop:
            break

        ta0 = streams[0].peek()
        ta1 = streams[1].peek()
        t_min_ev = green_start + tmin[green] if min_pending else math.inf
        t_max_ev = green_start + tmax[green]

        # Next event, with deterministic tie-breaking: forced max-green first,
        # then departures (threshold-down carriers), then the min-green check,
        # then arrivals road 0 before road 1.
        te = t_max_ev
        kind = 0
        if dep_time < te - TIME_EPS:
            te, kind = dep_time, 1
        if t_min_ev < te - TIME_EPS:
            te, kind = t_min_ev, 2
        if ta0 < te - TIME_EPS:
            te, kind = ta0, 3
        if ta1 < te - TIME_EPS:
            te, kind = ta1, 4

        if te > t_stop:
            t = t_stop
            break

        if te - t < 1e-12:
            stall += 1
            if stall > _STALL_LIMIT:
                raise SimulationStall(
                    f"no time progress at t={t!r}: counts={counts}, green={green}, "
                    f"green_start={green_start!r}, dep_time={dep_time!r}"
                )
        else:
            stall = 0

        integ[0] += counts[0] * (te - last_t)
        integ[1] += counts[1] * (te - last_t)
        last_t = te
        t = te

        if kind == 0:  # max green expired
            do_switch(GuardKind.MAX_GREEN, green)

        elif kind == 1:  # departure from the green road
            g = green
            before = counts[g]
            counts[g] = before - 1
            after = counts[g]
            if trace is not None:
                snap("departure", g)
            dep_time = t + next_headway() if after > 0 else math.inf
            zg = t - green_start
            if (after < s[g] <= before and zg > tmin[g] + TIME_EPS
                    and counts[other(g)] >= s[other(g)]):
                do_switch(GuardKind.THRESHOLD_DOWN, g)
            if after == 0:
                events.append(BusyEnd(t, g))
                periods[g].append(BusyPeriod(g, open_start[g], t, open_induced[g]))
                open_start[g] = None
                open_induced[g] = None
                if trace is not None:
                    snap("busy_end", g)

        elif kind == 2:  # minimum green reached
            min_pending = False
            g = green
            if counts[g] < s[g] and counts[other(g)] >= s[other(g)]:
                do_switch(GuardKind.MIN_GREEN, g)
            elif trace is not None:
                snap("min_green", g)

        else:  # arrival on road kind-3
            r = kind - 3
            streams[r].pop()
            arrivals_log[r].append(t)
            before = counts[r]
            counts[r] = before + 1
            if trace is not None:
                snap("arrival", r)
            if before == 0:
                induced = last_red_switch[r] if green != r else None
                open_start[r] = t
                open_induced[r] = induced
                events.append(BusyStart(t, r, induced))
                if trace is not None:
                    snap("busy_start", r)
                if green == r and dep_time == math.inf:
                    dep_time = t + next_headway()
            if before < s[r] <= counts[r] and green != r:
                g = green
                zg = t - green_start
                if zg > tmin[g] + TIME_EPS and counts[g] < s[g]:
                    do_switch(GuardKind.THRESHOLD_UP, r)

    horizon = t
    integ[0] += counts[0] * (horizon - last_t)
    integ[1] += counts[1] * (horizon - last_t)
    for r in (0, 1):
        if open_start[r] is not None:
            periods[r].append(BusyPeriod(r, open_start[r], horizon,
                                         open_induced[r], truncated=True))

    arr = (np.asarray(arrivals_log[0]), np.asarray(arrivals_log[1]))
    path = SamplePath(
        config=cfg, horizon=horizon, switch_count=switch_count, events=events,
        arrivals=arr, integral_x=(integ[0], integ[1]),
        busy_periods=periods, trace=trace,
    )
    _enrich_discrete(path)
    return path


def _enrich_discrete(path: SamplePath) -> None:
    w = path.config.rate_window
    for ev in path.events:
        if isinstance(ev, SwitchEvent):
            ev.alpha = (
                estimate_rate(path, 0, ev.time, w),
                estimate_rate(path, 1, ev.time, w),
            )
        elif isinstance(ev, BusyStart):
            ev.alpha = estimate_rate(path, ev.road, ev.time, w)


# ---------------------------------------------------------------------------
# Fluid (piecewise-linear) engine
# ---------------------------------------------------------------------------

def _simulate_fluid(cfg: SimConfig) -> SamplePath:
    if cfg.fluid_schedule is not None:
        scheds = cfg.fluid_schedule
    else:
        rates = tuple(
            0.0 if math.isinf(m) else 1.0 / m for m in cfg.mean_interarrival
        )
        scheds = ((RatePoint(0.0, rates[0]),), (RatePoint(0.0, rates[1]),))

    H = cfg.discharge_rate
    s = cfg.thresholds.as_tuple()
    tmin = cfg.cycles.min_green
    tmax = cfg.cycles.max_green

    x = [float(cfg.initial_queues[0]), float(cfg.initial_queues[1])]
    green = cfg.initial_green
    green_start = 0.0
    min_pending = True
    seg_idx = [0, 0]

    n_stop = cfg.stop_switches if cfg.stop_switches is not None else None
    t_stop = cfg.horizon if cfg.horizon is not None else math.inf

    t = 0.0
    integ = [0.0, 0.0]
    switch_count = 0
    events: list = []
    open_start: list[float | None] = [None, None]
    open_induced: list[int | None] = [None, None]
    last_red_switch: list[int | None] = [None, None]
    periods: tuple[list, list] = ([], [])
    trace: list | None = [] if cfg.record_trace else None
    stall = 0

    def rate(r: int) -> float:
        sched = scheds[r]
        i = seg_idx[r]
        while i + 1 < len(sched) and sched[i + 1].start <= t + TIME_EPS:
            i += 1
        seg_idx[r] = i
        return sched[i].rate

    def next_break(r: int) -> float:
        sched = scheds[r]
        i = seg_idx[r]
        while i + 1 < len(sched) and sched[i + 1].start <= t + TIME_EPS:
            i += 1
        return sched[i + 1].start if i + 1 < len(sched) else math.inf

    def slope(r: int) -> float:
        a = rate(r)
        if green != r:
            return a
        if x[r] <= QUEUE_EPS and a <= H:
            return 0.0
        return a - H

    def snap(kind: str, road: int) -> None:
        zg = t - green_start
        z = (zg, 0.0) if green == 0 else (0.0, zg)
        trace.append((t, kind, road, x[0], x[1], z[0], z[1], green))

    def open_bp(r: int, induced: int | None) -> None:
        open_start[r] = t
        open_induced[r] = induced
        events.append(BusyStart(t, r, induced, alpha=rate(r)))
        if trace is not None:
            snap("busy_start", r)

    for r in (0, 1):
        if x[r] > QUEUE_EPS:
            open_bp(r, None)
        else:
            a0 = rate(r)
            if (green != r and a0 > 0.0) or (green == r and a0 > H):
                open_bp(r, None)

    def do_switch(trigger: GuardKind, trigger_road: int) -> None:
        nonlocal green, green_start, min_pending, switch_count
        switch_count += 1
        old = green
        new = other(green)
        events.append(SwitchEvent(
            time=t, index=switch_count, to_red=old, to_green=new,
            trigger=trigger, trigger_road=trigger_road,
            x=(x[0], x[1]), green_duration=t - green_start,
            alpha=(rate(0), rate(1)), discharge=H,
        ))
        last_red_switch[old] = switch_count
        green = new
        green_start = t
        min_pending = True
        if trace is not None:
            snap("G2R", old)
            snap("R2G", new)
        # The road turning red starts accumulating immediately if fed.
        if x[old] <= QUEUE_EPS and rate(old) > 0.0:
            open_bp(old, switch_count)
        # A road turning green while empty grows only if arrivals exceed
        # capacity; that onset is exogenous (rate-driven), not switch-driven.
        if x[new] <= QUEUE_EPS and open_start[new] is None and rate(new) > H:
            open_bp(new, None)

    while True:
        if n_stop is not None and switch_count >= n_stop:
            break

        sl = (slope(0), slope(1))
        g = green
        # Candidate events as (time, rank, payload); lower rank wins ties.
        # Rank order: max green, threshold-down, min green, threshold-up,
        # queue-empty, schedule breakpoint.
        cands: list[tuple[float, int, int]] = [(green_start + tmax[g], 0, g)]
        if min_pending:
            cands.append((green_start + tmin[g], 2, g))
        for r in (0, 1):
            if sl[r] < 0 and x[r] > s[r] + QUEUE_EPS:
                cands.append((t + (x[r] - s[r]) / -sl[r], 1, r))
            if sl[r] > 0 and x[r] < s[r] - QUEUE_EPS:
                cands.append((t + (s[r] - x[r]) / sl[r], 3, r))
            if sl[r] < 0 and x[r] > QUEUE_EPS:
                cands.append((t + x[r] / -sl[r], 4, r))
            nb = next_break(r)
            if nb < math.inf:
                cands.append((nb, 5, r))

        te, rank, road = min(cands, key=lambda c: (c[0], c[1], c[2]))
        if te > t_stop:
            te = t_stop

        if te - t < 1e-12:
            stall += 1
            if stall > _STALL_LIMIT:
                raise SimulationStall(
                    f"no time progress at t={t!r}: x={x}, green={green}, "
                    f"green_start={green_start!r}"
                )
        else:
            stall = 0

        dt = te - t
        for r in (0, 1):
            nx = x[r] + sl[r] * dt
            if nx < QUEUE_EPS:
                nx = 0.0
            integ[r] += (x[r] + nx) * 0.5 * dt
            x[r] = nx
        t = te
        if t >= t_stop:
            break

        if rank == 0:  # max green
            do_switch(GuardKind.MAX_GREEN, road)

        elif rank == 1:  # queue touches its threshold from above
            x[road] = s[road]
            zg = t - green_start
            if (road == g and zg > tmin[g] + TIME_EPS
                    and x[other(g)] >= s[other(g)]):
                do_switch(GuardKind.THRESHOLD_DOWN, road)
            elif trace is not None:
                snap("threshold_down", road)

        elif rank == 2:  # minimum green reached
            min_pending = False
            if x[g] < s[g] and x[other(g)] >= s[other(g)]:
                do_switch(GuardKind.MIN_GREEN, g)
            elif trace is not None:
                snap("min_green", g)

        elif rank == 3:  # queue reaches its threshold from below
            x[road] = s[road]
            zg = t - green_start
            if (road != g and zg > tmin[g] + TIME_EPS and x[g] < s[g]):
                do_switch(GuardKind.THRESHOLD_UP, road)
            elif trace is not None:
                snap("threshold_up", road)

        elif rank == 4:  # queue drains to empty
            x[road] = 0.0
            events.append(BusyEnd(t, road))
            periods[road].append(BusyPeriod(road, open_start[road], t,
                                            open_induced[road]))
            open_start[road] = None
            open_induced[road] = None
            if trace is not None:
                snap("busy_end", road)

        else:  # schedule breakpoint; rate() advances the segment index itself
            was_growing = sl[road] > 0
            if trace is not None:
                snap("rate_change", road)
            if x[road] <= QUEUE_EPS and open_start[road] is None:
                a = rate(road)
                grows = a > 0.0 if green != road else a > H
                if grows and not was_growing:
                    open_bp(road, None)

    horizon = t
    for r in (0, 1):
        if open_start[r] is not None:
            periods[r].append(BusyPeriod(r, open_start[r], horizon,
                                         open_induced[r], truncated=True))

    return SamplePath(
        config=cfg, horizon=horizon, switch_count=switch_count, events=events,
        arrivals=(np.empty(0), np.empty(0)), integral_x=(integ[0], integ[1]),
        busy_periods=periods, trace=trace,
    )


# ---------------------------------------------------------------------------
# Event-log serialization
# ---------------------------------------------------------------------------

EVENT_LOG_HEADER = "time,kind,road,x1,x2,z1,z2,u"


def event_log_lines(path: SamplePath) -> list[str]:
    """Flat event log, one comma-separated record per line.

    Requires a path recorded with ``record_trace=True``. Roads and the light
    column are 1-based in this external format.
    """
    if path.trace is None:
        raise ValueError("path was generated without record_trace=True")
    lines = [EVENT_LOG_HEADER]
    for (t, kind, road, x0, x1, z0, z1, green) in path.trace:
        lines.append(
            f"{t:.9f},{kind},{road + 1},{x0:.9f},{x1:.9f},"
            f"{z0:.9f},{z1:.9f},{green + 1}"
        )
    return lines
