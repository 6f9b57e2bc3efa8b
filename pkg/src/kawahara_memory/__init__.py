"""Kawahara equation with distributed infinite memory on a bounded interval.

The package simulates the fifth-order dispersive equation coupled to a
history variable, tracks the energy and its dissipation, checks the
smallness condition that guarantees decay, and fits decay envelopes.
"""

from .config import PRESETS, ExperimentPreset, emit_config, get_preset, parse_config
from .diagnostics import (
    DecayFit,
    EnergyRecord,
    LyapunovConstants,
    TimeSeries,
    check_equivalence,
    energy,
    fit_decay,
    generalized_bound,
    h_correction,
    identity_residual,
    lyapunov,
    lyapunov_constants,
)
from .errors import (
    KawaharaError,
    ParameterOutOfRange,
    GridTooCoarse,
    DimensionMismatch,
    EigSolveFailure,
    TailTooFat,
    ModeMismatch,
    LinearSolveFailure,
    BlowupDetected,
    NonpositiveD,
    DomainError,
    SeriesTooShort,
    ConfigError,
    ParseError,
    UnknownKey,
    MissingRequired,
)
from .history import (
    HistoryField,
    HistoryMode,
    advance_history,
    init_history,
    memory_integral,
    memory_norm,
)
from .kernel import (
    Family,
    MemoryKernel,
    ValidationReport,
    eval_f,
    eval_g,
    eval_xi,
    make_kernel,
    validate_hypotheses,
)
from .solver import (
    ConditionResult,
    RunResult,
    SimConfig,
    SimState,
    check_smallness_condition,
    initial_state,
    run,
    step,
)
from .spatial import (
    EmbeddingConstants,
    SpatialDiscretization,
    build_discretization,
    estimate_constants,
    norm_Hk,
    norm_L2,
    poincare_constant,
)

__version__ = "0.1.0"

__all__ = [
    "BlowupDetected",
    "ConditionResult",
    "ConfigError",
    "DecayFit",
    "DimensionMismatch",
    "DomainError",
    "EigSolveFailure",
    "EmbeddingConstants",
    "EnergyRecord",
    "ExperimentPreset",
    "Family",
    "GridTooCoarse",
    "HistoryField",
    "HistoryMode",
    "KawaharaError",
    "LinearSolveFailure",
    "LyapunovConstants",
    "MemoryKernel",
    "MissingRequired",
    "ModeMismatch",
    "NonpositiveD",
    "PRESETS",
    "ParameterOutOfRange",
    "ParseError",
    "RunResult",
    "SeriesTooShort",
    "SimConfig",
    "SimState",
    "SpatialDiscretization",
    "TailTooFat",
    "TimeSeries",
    "UnknownKey",
    "ValidationReport",
    "advance_history",
    "build_discretization",
    "check_equivalence",
    "check_smallness_condition",
    "emit_config",
    "energy",
    "estimate_constants",
    "eval_f",
    "eval_g",
    "eval_xi",
    "fit_decay",
    "generalized_bound",
    "get_preset",
    "h_correction",
    "identity_residual",
    "init_history",
    "initial_state",
    "lyapunov",
    "lyapunov_constants",
    "make_kernel",
    "memory_integral",
    "memory_norm",
    "norm_Hk",
    "norm_L2",
    "parse_config",
    "poincare_constant",
    "run",
    "step",
    "validate_hypotheses",
]
