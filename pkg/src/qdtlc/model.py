"""Hybrid model of a two-road signalized intersection with threshold feedback.

The controller sees only partial state: for each road, whether the queue
content is at/above or strictly below a configurable threshold, plus its own
green-phase clock.  Each green phase is guaranteed a minimum duration and is
cut off at a maximum duration; between the two bounds the light may be
interrupted as soon as the observed occupancy pattern favors the other road.

Everything in this module is a pure function of its inputs: no randomness,
no time loop.  The simulators in :mod:`qdtlc.simulate` drive these functions.

Road indices are 0-based throughout the code base.  The event-log file format
and CLI flags use 1-based road numbers, matching street-side convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

# Absolute tolerance for clock/guard comparisons, in seconds.
TIME_EPS = 1e-9


def other(road: int) -> int:
    """The perpendicular road."""
    return 1 - road


class Region(Enum):
    """Occupancy pattern: which queues sit at or above their thresholds.

    The threshold comparison is one-sided: a queue exactly at its threshold
    counts as "at/above".
    """

    NONE_AT = 0    # both queues below threshold
    ROAD0_AT = 1   # only road 0 at/above
    ROAD1_AT = 2   # only road 1 at/above
    BOTH_AT = 3

    def at_or_above(self, road: int) -> bool:
        if road == 0:
            return self in (Region.ROAD0_AT, Region.BOTH_AT)
        return self in (Region.ROAD1_AT, Region.BOTH_AT)


class GuardKind(Enum):
    """Guard conditions whose satisfaction triggers a discrete event."""

    THRESHOLD_UP = "threshold_up"      # queue reaches its threshold from below
    THRESHOLD_DOWN = "threshold_down"  # queue drops below its threshold from above
    MIN_GREEN = "min_green"            # green clock reaches the minimum
    MAX_GREEN = "max_green"            # green clock reaches the maximum
    QUEUE_EMPTY = "queue_empty"        # queue content hits zero from above
    SURGE_ON = "surge_on"              # arrivals exceed discharge while green
    ARRIVALS_ON = "arrivals_on"        # arrival flow turns on while red

    @property
    def induces_switch(self) -> bool:
        return self in (
            GuardKind.THRESHOLD_UP,
            GuardKind.THRESHOLD_DOWN,
            GuardKind.MIN_GREEN,
            GuardKind.MAX_GREEN,
        )


@dataclass(frozen=True)
class ThresholdVector:
    """Queue-content thresholds (vehicles), the controllable parameters."""

    s1: float
    s2: float

    def __post_init__(self) -> None:
        if not (self.s1 > 0 and self.s2 > 0):
            raise ValueError(f"thresholds must be strictly positive, got {self}")

    def __getitem__(self, road: int) -> float:
        return (self.s1, self.s2)[road]

    def as_tuple(self) -> tuple[float, float]:
        return (self.s1, self.s2)


@dataclass(frozen=True)
class CycleConfig:
    """Per-road minimum and maximum green durations, in seconds."""

    min_green: tuple[float, float]
    max_green: tuple[float, float]

    def __post_init__(self) -> None:
        for n in (0, 1):
            if not (0 < self.min_green[n] < self.max_green[n]):
                raise ValueError(
                    f"need 0 < min_green < max_green on road {n}: "
                    f"{self.min_green[n]} vs {self.max_green[n]}"
                )


@dataclass(frozen=True)
class FlowRates:
    """Instantaneous arrival and discharge rates, vehicles/second."""

    arrival: tuple[float, float]
    discharge: tuple[float, float]

    def __post_init__(self) -> None:
        if any(a < 0 for a in self.arrival):
            raise ValueError(f"arrival rates must be nonnegative: {self.arrival}")
        if any(h <= 0 for h in self.discharge):
            raise ValueError(f"discharge rates must be positive: {self.discharge}")


@dataclass(frozen=True)
class HybridState:
    """Continuous state: queue contents, green clocks, and the green road.

    At most one clock runs at a time; the red road's clock is frozen at 0.
    ``green`` identifies the road holding the light, which matters in the
    instant right after a switch when both clocks read zero.
    """

    x: tuple[float, float]
    z: tuple[float, float]
    green: int

    def __post_init__(self) -> None:
        if any(q < 0 for q in self.x):
            raise ValueError(f"queue contents must be nonnegative: {self.x}")
        if any(c < 0 for c in self.z):
            raise ValueError(f"clocks must be nonnegative: {self.z}")
        if self.green not in (0, 1):
            raise ValueError(f"green road must be 0 or 1: {self.green}")
        if self.z[other(self.green)] > TIME_EPS:
            raise ValueError(
                f"red road {other(self.green)} has a running clock: z={self.z}"
            )


def region_of(x: tuple[float, float], s: ThresholdVector) -> Region:
    """Classify queue contents against the thresholds.

    Boundary values count as at/above: ``x[n] == s[n]`` classifies the same
    way as ``x[n] > s[n]``.
    """
    if any(q < 0 for q in x):
        raise ValueError(f"queue contents must be nonnegative: {x}")
    at0 = x[0] >= s[0]
    at1 = x[1] >= s[1]
    if at0 and at1:
        return Region.BOTH_AT
    if at0:
        return Region.ROAD0_AT
    if at1:
        return Region.ROAD1_AT
    return Region.NONE_AT


def control_decision(
    region: Region,
    z: tuple[float, float],
    cfg: CycleConfig,
    green: int | None = None,
) -> int:
    """Which road should hold the green light, given the occupancy pattern.

    Hysteresis rules:

    * Neither or both queues at threshold: the green road holds until its
      maximum green expires (symmetric hold-to-max).
    * Exactly one queue at threshold: that road is favored; the other road
      retains green only while still inside its minimum green.

    The minimum green is inviolable (no switch away before it expires) and
    the maximum green is inviolable (always switch at expiry).

    ``green`` disambiguates the light holder when both clocks read zero
    (the instant of a switch); otherwise it is inferred from the clocks.
    """
    if z[0] > TIME_EPS and z[1] > TIME_EPS:
        raise ValueError(f"both clocks running: z={z}")
    if green is None:
        if z[0] > TIME_EPS:
            green = 0
        elif z[1] > TIME_EPS:
            green = 1
        else:
            raise ValueError("both clocks are zero; pass the green road explicitly")

    zc = z[green]
    if zc >= cfg.max_green[green] - TIME_EPS:
        return other(green)

    if region in (Region.NONE_AT, Region.BOTH_AT):
        return green
    favored = 0 if region is Region.ROAD0_AT else 1
    if favored == green:
        return green
    # The favored road is waiting; the green road holds only inside its
    # minimum green.
    if zc < cfg.min_green[green] - TIME_EPS:
        return green
    return favored


def flow_rate(road: int, state: HybridState, rates: FlowRates) -> float:
    """Net queue growth rate for one road, vehicles/second."""
    a = rates.arrival[road]
    h = rates.discharge[road]
    if state.green != road:
        return a
    if state.x[road] <= 0 and a <= h:
        return 0.0
    return a - h


def departure_rate(road: int, state: HybridState, rates: FlowRates) -> float:
    """Instantaneous outflow of one road, vehicles/second."""
    if state.green != road:
        return 0.0
    if state.x[road] > 0:
        return rates.discharge[road]
    return rates.arrival[road]


def clock_reset_due(
    road: int,
    state_before: HybridState,
    x_after: tuple[float, float],
    s: ThresholdVector,
    cfg: CycleConfig,
) -> tuple[GuardKind, int] | None:
    """Should the green road's clock reset (ending its green phase) now?

    ``road`` must currently hold the green light. ``state_before`` carries the
    queue contents just before the instant under test and ``x_after`` the
    contents just after, so threshold crossings are visible. Returns the
    identity of the triggering guard ``(kind, road_of_guard)`` or ``None``.

    Triggers, checked in fixed priority order:

    * max green expired on the green road;
    * green queue drained below its threshold while the opposing queue is
      at/above (only after minimum green);
    * minimum green expired with the green queue below and the opposing
      queue at/above threshold;
    * opposing queue reached its threshold from below while the green queue
      is below threshold (only after minimum green).
    """
    if state_before.green != road:
        raise ValueError(f"road {road} does not hold the green light")
    opp = other(road)
    zc = state_before.z[road]
    xb = state_before.x

    if zc >= cfg.max_green[road] - TIME_EPS:
        return (GuardKind.MAX_GREEN, road)

    past_min = zc > cfg.min_green[road] + TIME_EPS
    at_min = math.isclose(zc, cfg.min_green[road], abs_tol=TIME_EPS)

    crossed_down = x_after[road] < s[road] <= xb[road]
    if past_min and crossed_down and x_after[opp] >= s[opp]:
        return (GuardKind.THRESHOLD_DOWN, road)

    if at_min and x_after[road] < s[road] and x_after[opp] >= s[opp]:
        return (GuardKind.MIN_GREEN, road)

    crossed_up_opp = xb[opp] < s[opp] <= x_after[opp]
    if past_min and crossed_up_opp and x_after[road] < s[road]:
        return (GuardKind.THRESHOLD_UP, opp)

    return None
