"""Adaptive multiple importance sampling for drift-controlled diffusions."""

from .adaptation import (
    FULL_RECOMPUTE,
    INCREMENTAL,
    AdaptationState,
    ForcedControls,
    NoAdaptation,
    PathIntegralAdaptation,
    accumulate,
    adapt,
    solve_params,
)
from .basis import AffineBasis, ConstantBasis, PiecewiseTimeBasis
from .engine import AmisResult, IterationOutput, estimate_signed, free_energy, run_amis
from .errors import (
    AmisError,
    ConfigurationError,
    EngineError,
    InvalidDiscardTimeError,
    SimulationError,
    StructuralError,
    UndefinedEssError,
    UndefinedResultError,
    UnsupportedFormError,
)
from .problems import (
    COUNTEREXAMPLE_PSI,
    counterexample_problem,
    gaussian_target_problem,
    gaussian_target_psi,
)
from .reweighting import (
    Balance,
    DiscardFixed,
    DiscardOptimized,
    EssReport,
    Flat,
    NonMixingLastBatch,
    balance_weights,
    choose_fixed_discard,
    choose_optimized_discard,
    discard_weights,
    ess_estimate,
    flat_weights,
    nonmixing_weights,
    weighted_mean,
)
from .sde import (
    DiffusionProblem,
    FeedbackControl,
    SamplePath,
    constant_control,
    cross_log_ratio,
    girsanov_log_weight,
    path_cost,
    simulate_path,
    zero_control,
)
from .store import SampleStore, WeightedSample

__version__ = "0.1.0"

__all__ = [
    "AdaptationState",
    "AffineBasis",
    "AmisError",
    "AmisResult",
    "Balance",
    "ConfigurationError",
    "ConstantBasis",
    "COUNTEREXAMPLE_PSI",
    "DiffusionProblem",
    "DiscardFixed",
    "DiscardOptimized",
    "EngineError",
    "EssReport",
    "FeedbackControl",
    "Flat",
    "ForcedControls",
    "FULL_RECOMPUTE",
    "INCREMENTAL",
    "InvalidDiscardTimeError",
    "IterationOutput",
    "NoAdaptation",
    "NonMixingLastBatch",
    "PathIntegralAdaptation",
    "PiecewiseTimeBasis",
    "SamplePath",
    "SampleStore",
    "SimulationError",
    "StructuralError",
    "UndefinedEssError",
    "UndefinedResultError",
    "UnsupportedFormError",
    "WeightedSample",
    "accumulate",
    "adapt",
    "balance_weights",
    "choose_fixed_discard",
    "choose_optimized_discard",
    "constant_control",
    "counterexample_problem",
    "cross_log_ratio",
    "discard_weights",
    "ess_estimate",
    "estimate_signed",
    "flat_weights",
    "free_energy",
    "gaussian_target_problem",
    "gaussian_target_psi",
    "girsanov_log_weight",
    "nonmixing_weights",
    "path_cost",
    "run_amis",
    "simulate_path",
    "solve_params",
    "weighted_mean",
    "zero_control",
]
