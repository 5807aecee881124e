"""Bounded-confidence opinion dynamics with discontinuous right-hand sides."""

from .caratheodory import (
    GammaGraph,
    build_gamma,
    carath_rhs,
    caratheodory_branches,
    psi,
    simulate_caratheodory,
    validity_margin,
    verify_caratheodory,
)
from .hull import HullConvergenceError, hull_membership
from .integrator import (
    NumericError,
    RunawayEventsError,
    StepControl,
    Trajectory,
    euler_oracle,
    locate_event,
    propagate_linear_exact,
    rk4_step,
)
from .krasovsky import (
    BranchBudgetError,
    CombinatorialBlowupError,
    Enumerate,
    EventClass,
    Fixed,
    UnsupportedSliding,
    active_manifolds,
    classify_event,
    limit_field_vertices,
    simulate_krasovsky,
    slide_exit_targets,
    sliding_coefficient,
    verify_krasovsky,
    zero_in_krasovsky,
)
from .model import (
    AffineSaturatedKernel,
    ConfigError,
    Configuration,
    ConstantKernel,
    MetricModel,
    ModelField,
    TopologicalModel,
    average,
    eval_kernel,
    interaction_graph,
    metric_neighbors,
    parse_kernel,
    topological_neighbors,
    vector_field,
)
