"""Quasi-dynamic traffic-light control with sample-path gradient estimation."""

from .model import (
    CycleConfig,
    FlowRates,
    GuardKind,
    HybridState,
    Region,
    ThresholdVector,
    clock_reset_due,
    control_decision,
    departure_rate,
    flow_rate,
    region_of,
)
from .simulate import (
    BusyEnd,
    BusyPeriod,
    BusyStart,
    RatePoint,
    SamplePath,
    SimConfig,
    SwitchEvent,
    estimate_rate,
    sample_cost,
    simulate,
)
from .ipa import (
    DerivativeState,
    EstimatorFault,
    GradientEstimate,
    apply_event,
    estimate_gradient,
    switch_time_derivative,
)
from .optimize import (
    OptRunRecord,
    StepRule,
    finite_difference_oracle,
    finite_difference_samples,
    gradient_step,
    optimize,
)
from .experiments import (
    SCENARIOS,
    CostSurface,
    ScenarioSpec,
    brute_force_surface,
    cost_reduction,
    run_scenario,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
