"""Optimal production, sales and debt-repayment planning for a small firm.

Linear three-state model (cumulative profit, overdue payables, finished
goods inventory) with three bounded controls; the optimal policies are
bang-bang with closed-form switching times, certified by multiplier
conditions and an exhaustive search oracle.
"""

from .chain import ChainInterval, ChainJunctionError, ChainPlan, chain_plan, evaluate_chain
from .dynamics import (
    AdjointTrajectory,
    AmbiguousRootError,
    PiecewiseExpFn,
    SampledTrajectory,
    Trajectory,
    TrajectorySegment,
    Violation,
    adjoint_backward,
    find_zero_crossing,
    integrate_exact,
    integrate_rk4,
)
from .model import (
    ControlBoundsError,
    ControlSegment,
    ControlValue,
    JumpRecord,
    ModelParams,
    NoFeasibleCandidateError,
    PiecewiseControl,
    PolicyInfeasibleError,
    ScenarioKind,
    State,
    UncoveredInitialConditionError,
    ValidationReport,
    classify_scenario,
    cost_rate,
    validate_params,
)
from .solver import (
    ClosedFormTrajectory,
    EventTime,
    SwitchingTimes,
    SynthesisResult,
    closed_form_trajectory,
    debt_clearance_time,
    initial_jump,
    objective_value,
    stock_depletion_time,
    synthesize_policy,
)
from .verify import (
    BruteForceGrid,
    CertReport,
    Certification,
    MultiplierSet,
    SwitchingValues,
    brute_force_best,
    certify_policy,
    check_control_maximizes,
    check_slackness,
    check_transversality,
    hamiltonian,
    multiplier_set_for_scenario,
    switching_values,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory",
    "AmbiguousRootError",
    "BruteForceGrid",
    "CertReport",
    "Certification",
    "ChainInterval",
    "ChainJunctionError",
    "ChainPlan",
    "ClosedFormTrajectory",
    "ControlBoundsError",
    "ControlSegment",
    "ControlValue",
    "EventTime",
    "JumpRecord",
    "ModelParams",
    "MultiplierSet",
    "NoFeasibleCandidateError",
    "PiecewiseControl",
    "PiecewiseExpFn",
    "PolicyInfeasibleError",
    "SampledTrajectory",
    "ScenarioKind",
    "State",
    "SwitchingTimes",
    "SwitchingValues",
    "SynthesisResult",
    "Trajectory",
    "TrajectorySegment",
    "UncoveredInitialConditionError",
    "ValidationReport",
    "Violation",
    "adjoint_backward",
    "brute_force_best",
    "certify_policy",
    "chain_plan",
    "check_control_maximizes",
    "check_slackness",
    "check_transversality",
    "classify_scenario",
    "closed_form_trajectory",
    "cost_rate",
    "debt_clearance_time",
    "evaluate_chain",
    "find_zero_crossing",
    "hamiltonian",
    "initial_jump",
    "integrate_exact",
    "integrate_rk4",
    "multiplier_set_for_scenario",
    "objective_value",
    "stock_depletion_time",
    "switching_values",
    "synthesize_policy",
    "validate_params",
]
