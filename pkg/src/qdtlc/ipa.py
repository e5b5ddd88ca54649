"""Event-driven gradient estimation along one sample path.

The time-averaged weighted queue content is differentiated with respect to
the two queue thresholds by propagating two kinds of derivative through the
observed event sequence:

* switch-time derivatives - how much each light-switch time moves per unit
  of threshold change, determined by which guard induced the switch;
* state derivatives - the per-road queue-content sensitivities, which are
  piecewise constant between events (the flow rates depend on neither the
  queue level nor the thresholds) and jump only at switches and busy-period
  boundaries.

The cost derivative then decomposes over busy periods: within each one, the
state derivative is integrated segment by segment between the switches that
fall inside it.  Everything needed is event times plus the arrival/discharge
rates in effect at those events, so the estimator is a single linear pass
over the event log.

Two memory policies are provided.  ``"full"`` propagates the derivative
chain exactly as derived; over a short fixed horizon it matches central
finite differences of the fluid model to floating-point accuracy.  It is,
however, a chaotic-sensitivity measurement: whenever a queue stays non-empty
across a green-to-red switch, the next threshold crossing amplifies the
carried derivative by a discharge/arrival ratio (> 1), so over thousands of
switches the chain magnitude grows exponentially while its expectation stays
O(1) only through sign cancellation.  ``"windowed"`` is the practical
long-path policy: switch-time derivatives are taken from the triggering
crossing alone (clock-expiry switches carry none), busy periods open with a
zero derivative, carried values are clipped, and the chain restarts whenever
both queues are empty.  That truncates the phase sensitivity - which the
time-averaged cost forgets at rate 1/T anyway - and keeps the variance
bounded, at the price of a small bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import GuardKind
from .simulate import BusyEnd, BusyStart, SamplePath, SwitchEvent

# Discrete-mode guard: a queue observed draining through its threshold implies
# local arrivals below capacity, but the windowed rate estimate can still come
# out at or above the discharge rate.  Estimates are capped at this fraction
# of the discharge rate before entering the switch-time denominator.
GAMMA_ALPHA_CAP = 0.95

# Component clip for carried derivatives under the windowed policy.
DERIVATIVE_CLIP = 5.0


class EstimatorFault(RuntimeError):
    """Derivative propagation hit a state the model excludes."""


@dataclass(frozen=True)
class DerivativeState:
    """Carried between events: state derivatives and the latest switch data.

    ``x_prime[n][i]`` is the sensitivity of queue ``n`` to threshold ``i``;
    it is zero whenever road ``n`` is empty.  ``sigma_prime`` belongs to
    switch number ``last_switch_index`` (zero before any switch).
    """

    x_prime: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    sigma_prime: tuple[float, float] = (0.0, 0.0)
    last_switch_index: int = 0


def switch_time_derivative(
    trigger: GuardKind,
    road: int,
    alpha: float,
    discharge: float,
    x_prime_before: tuple[float, float],
    sigma_prime_prev: tuple[float, float],
) -> tuple[float, float]:
    """Sensitivity of a light-switch time to each threshold.

    A switch induced by a queue reaching its threshold from below moves with
    that queue's crossing time, scaled by the net inflow; one induced by a
    draining queue scales by the (negative) net flow; clock-expiry switches
    inherit the previous switch's sensitivity because the elapsed green is a
    constant.
    """
    if trigger is GuardKind.THRESHOLD_UP:
        if alpha == 0.0:
            raise EstimatorFault(
                f"threshold-up switch on road {road} with zero arrival rate"
            )
        return (
            ((1.0 if road == 0 else 0.0) - x_prime_before[0]) / alpha,
            ((1.0 if road == 1 else 0.0) - x_prime_before[1]) / alpha,
        )
    if trigger is GuardKind.THRESHOLD_DOWN:
        denom = alpha - discharge
        if denom == 0.0:
            raise EstimatorFault(
                f"threshold-down switch on road {road} with zero net flow "
                f"(alpha == discharge == {alpha})"
            )
        return (
            ((1.0 if road == 0 else 0.0) - x_prime_before[0]) / denom,
            ((1.0 if road == 1 else 0.0) - x_prime_before[1]) / denom,
        )
    if trigger in (GuardKind.MIN_GREEN, GuardKind.MAX_GREEN):
        return tuple(sigma_prime_prev)
    raise EstimatorFault(f"guard kind {trigger} does not induce a switch")


def apply_event(state: DerivativeState, event) -> DerivativeState:
    """Advance the derivative state across one event record (exact chain).

    A switch updates both roads: the road losing green jumps by the discharge
    rate times the switch-time derivative, the road gaining green jumps the
    opposite way; empty roads stay at zero until their busy period opens.  A
    busy-period start seeds the opening derivative: zero for an exogenous
    start, minus arrival rate times the inducing switch's time derivative
    when the queue filled because its red phase began.  A busy-period end
    resets the road's derivative to zero.
    """
    if isinstance(event, SwitchEvent):
        sp = switch_time_derivative(
            event.trigger, event.trigger_road,
            event.alpha[event.trigger_road], event.discharge,
            state.x_prime[event.trigger_road], state.sigma_prime,
        )
        xp = [list(state.x_prime[0]), list(state.x_prime[1])]
        r, g = event.to_red, event.to_green
        if event.x[r] > 0:
            xp[r][0] -= event.discharge * sp[0]
            xp[r][1] -= event.discharge * sp[1]
        if event.x[g] > 0:
            xp[g][0] += event.discharge * sp[0]
            xp[g][1] += event.discharge * sp[1]
        return DerivativeState(
            x_prime=(tuple(xp[0]), tuple(xp[1])),
            sigma_prime=tuple(sp),
            last_switch_index=event.index,
        )

    if isinstance(event, BusyStart):
        xp = [list(state.x_prime[0]), list(state.x_prime[1])]
        if event.induced_by_switch is None:
            xp[event.road] = [0.0, 0.0]
        else:
            if event.induced_by_switch != state.last_switch_index:
                raise EstimatorFault(
                    f"busy start at t={event.time} cites switch "
                    f"{event.induced_by_switch}, but the last switch seen "
                    f"is {state.last_switch_index}"
                )
            xp[event.road] = [
                -event.alpha * state.sigma_prime[0],
                -event.alpha * state.sigma_prime[1],
            ]
        return DerivativeState(
            x_prime=(tuple(xp[0]), tuple(xp[1])),
            sigma_prime=state.sigma_prime,
            last_switch_index=state.last_switch_index,
        )

    if isinstance(event, BusyEnd):
        xp = [list(state.x_prime[0]), list(state.x_prime[1])]
        xp[event.road] = [0.0, 0.0]
        return DerivativeState(
            x_prime=(tuple(xp[0]), tuple(xp[1])),
            sigma_prime=state.sigma_prime,
            last_switch_index=state.last_switch_index,
        )

    raise EstimatorFault(f"unknown event record: {event!r}")


@dataclass
class BusyAccumulator:
    """Segment-wise integral of one road's state derivative over a busy period."""

    road: int
    start: float
    segment_start: float = 0.0
    segments: list[tuple[float, tuple[float, float]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.segment_start = self.start

    def close_segment(self, until: float, x_prime: tuple[float, float]) -> None:
        dt = until - self.segment_start
        if dt > 0:
            self.segments.append((dt, tuple(x_prime)))
        self.segment_start = until

    def finish(self) -> np.ndarray:
        """Contribution of this busy period to the cost derivative (unweighted)."""
        out = np.zeros(2)
        for dt, xp in self.segments:
            out[0] += dt * xp[0]
            out[1] += dt * xp[1]
        return out


def busy_period_cost_derivative(acc: BusyAccumulator) -> np.ndarray:
    """Sum of (state-derivative value) x (segment duration) over the period."""
    return acc.finish()


@dataclass
class GradientEstimate:
    """Sample-path derivative of the time-averaged weighted queue content."""

    gradient: np.ndarray
    per_period: list[tuple[int, float, float, np.ndarray]]
    horizon: float
    weights: tuple[float, float]

    def record_line(self, s: tuple[float, float], seed: int) -> str:
        g = self.gradient
        return (
            f"{s[0]:.9f},{s[1]:.9f},{g[0]:.12g},{g[1]:.12g},"
            f"{self.horizon:.9f},{seed}"
        )


GRADIENT_RECORD_HEADER = "s1,s2,dLds1,dLds2,T,seed"


def _clip(v: float, bound: float) -> float:
    if v > bound:
        return bound
    if v < -bound:
        return -bound
    return v


def estimate_gradient(
    path: SamplePath,
    weights: tuple[float, float] | None = None,
    horizon: float | None = None,
    memory: str | None = None,
) -> GradientEstimate:
    """Single pass over the event log, linear in the number of events.

    ``memory`` selects the chain policy described in the module docstring:
    ``"full"`` (exact; default for fluid paths) or ``"windowed"`` (variance-
    controlled; default for discrete paths).  Busy periods still open at the
    horizon are truncated there: the horizon is fixed, so only their
    accumulated segments contribute.
    """
    w = weights if weights is not None else path.config.weights
    T = horizon if horizon is not None else path.horizon
    discrete = path.config.mode == "discrete"
    if memory is None:
        memory = "windowed" if discrete else "full"
    if memory not in ("full", "windowed"):
        raise ValueError(f"unknown memory policy: {memory}")
    windowed = memory == "windowed"
    H = path.config.discharge_rate
    cap = GAMMA_ALPHA_CAP * H

    state = DerivativeState()
    open_acc: list[BusyAccumulator | None] = [None, None]
    per_period: list[tuple[int, float, float, np.ndarray]] = []
    totals = np.zeros(2)

    def flush(road: int, until: float) -> None:
        acc = open_acc[road]
        if acc is not None:
            acc.close_segment(until, state.x_prime[road])

    for pos, ev in enumerate(path.events):
        try:
            if isinstance(ev, SwitchEvent):
                if discrete and ev.trigger is GuardKind.THRESHOLD_DOWN \
                        and ev.alpha[ev.trigger_road] > cap:
                    ev = replace(ev, alpha=(
                        cap if ev.trigger_road == 0 else ev.alpha[0],
                        cap if ev.trigger_road == 1 else ev.alpha[1],
                    ))
                flush(0, ev.time)
                flush(1, ev.time)
                if windowed:
                    state = _apply_switch_windowed(state, ev, H)
                else:
                    state = apply_event(state, ev)
            elif isinstance(ev, BusyStart):
                if windowed:
                    state = _open_busy_windowed(state, ev)
                else:
                    state = apply_event(state, ev)
                open_acc[ev.road] = BusyAccumulator(ev.road, ev.time)
            elif isinstance(ev, BusyEnd):
                flush(ev.road, ev.time)
                acc = open_acc[ev.road]
                contrib = acc.finish()
                per_period.append((ev.road, acc.start, ev.time, contrib))
                totals += w[ev.road] * contrib
                open_acc[ev.road] = None
                state = apply_event(state, ev)
        except EstimatorFault as exc:
            raise EstimatorFault(f"event #{pos} at t={ev.time}: {exc}") from exc

        if windowed and open_acc[0] is None and open_acc[1] is None \
                and (state.sigma_prime[0] != 0.0 or state.sigma_prime[1] != 0.0):
            state = DerivativeState(last_switch_index=state.last_switch_index)

    for road in (0, 1):
        acc = open_acc[road]
        if acc is not None:
            acc.close_segment(T, state.x_prime[road])
            contrib = acc.finish()
            per_period.append((road, acc.start, T, contrib))
            totals += w[road] * contrib

    return GradientEstimate(
        gradient=totals / T, per_period=per_period, weights=tuple(w), horizon=T
    )


def _apply_switch_windowed(state: DerivativeState, ev: SwitchEvent,
                           H: float) -> DerivativeState:
    """Switch update under the windowed policy.

    Identical to the exact chain except that every carried value is clipped
    and busy periods are opened at zero elsewhere; clock-expiry switches
    still inherit (each red phase's opening and closing exposures must carry
    the same value to cancel), which is safe once the crossings that feed
    the chain are bounded.
    """
    sp = switch_time_derivative(
        ev.trigger, ev.trigger_road, ev.alpha[ev.trigger_road],
        ev.discharge, state.x_prime[ev.trigger_road], state.sigma_prime,
    )
    sp = (_clip(sp[0], DERIVATIVE_CLIP), _clip(sp[1], DERIVATIVE_CLIP))
    xp = [list(state.x_prime[0]), list(state.x_prime[1])]
    r, g = ev.to_red, ev.to_green
    if ev.x[r] > 0:
        xp[r][0] = _clip(xp[r][0] - H * sp[0], DERIVATIVE_CLIP)
        xp[r][1] = _clip(xp[r][1] - H * sp[1], DERIVATIVE_CLIP)
    if ev.x[g] > 0:
        xp[g][0] = _clip(xp[g][0] + H * sp[0], DERIVATIVE_CLIP)
        xp[g][1] = _clip(xp[g][1] + H * sp[1], DERIVATIVE_CLIP)
    return DerivativeState(
        x_prime=(tuple(xp[0]), tuple(xp[1])),
        sigma_prime=sp,
        last_switch_index=ev.index,
    )


def _open_busy_windowed(state: DerivativeState, ev: BusyStart) -> DerivativeState:
    """Busy periods open with a zero derivative under the windowed policy."""
    xp = [list(state.x_prime[0]), list(state.x_prime[1])]
    xp[ev.road] = [0.0, 0.0]
    return DerivativeState(
        x_prime=(tuple(xp[0]), tuple(xp[1])),
        sigma_prime=state.sigma_prime,
        last_switch_index=state.last_switch_index,
    )
