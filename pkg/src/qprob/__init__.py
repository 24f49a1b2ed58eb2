"""Finite-dimensional quantum probability.

POVMs on finite sample spaces, operator-valued Radon-Nikodym derivatives,
quantum expectation with complete-positivity certification, classification
of vanishing means, conditional expectation and martingale convergence
experiments.
"""

from .conditioning import (
    ConditionalSolve,
    MartingaleRun,
    MartingaleVerdict,
    build_martingale,
    cond_continuity_check,
    conditional_expectation,
    gamma_equiv,
    is_martingale,
    qmct_run,
    rho_slice_check,
    sigma_member,
    tower_check,
)
from .errors import (
    DimMismatch,
    InvalidMatrix,
    MeanDidNotConverge,
    NotAbsolutelyContinuous,
    NotAnEffect,
    NotConverged,
    NotNested,
    NotPositive,
    NotProbabilityMeasure,
    NotStrictlyPositiveEffect,
    PartialSumsDiverge,
    QprobError,
    SpaceMismatch,
    ZeroExpectation,
    ZeroMeasure,
)
from .expectation import (
    DominatedConvergenceReport,
    EffectSeriesVerdict,
    ProbeStateSet,
    SeriesResult,
    boxtimes,
    choi_matrix,
    dct_check,
    effect_series_identity,
    expectation,
    expectation_via_derivative,
    general_boxtimes,
    probe_states,
    psi_rho,
    series_expectation,
    uw_as_limit,
)
from .linalg import (
    DensityOperator,
    geometric_mean,
    is_psd,
    pinv_psd,
    range_projector,
    root_psd,
    sqrt_psd,
    hermitian_basis,
    max_entry_norm,
    trace_pair,
)
from .meanzero import (
    MeanZeroReport,
    adjoint_mean_zero,
    classify_mean_zero,
    counterexample_fixtures,
)
from .povm import (
    ClassicalMeasure,
    Povm,
    induced_measure,
    is_abs_continuous,
    nonprincipal_rn,
    principal_rn,
    scalar_povm,
    singular_atoms,
    validate_povm,
)
from .rv import QuantumRandomVariable
from .spaces import (
    Filtration,
    PartitionSigmaAlgebra,
    SampleSpace,
    join_partitions,
)

__version__ = "0.1.0"

__all__ = [
    "adjoint_mean_zero",
    "boxtimes",
    "build_martingale",
    "choi_matrix",
    "ClassicalMeasure",
    "classify_mean_zero",
    "cond_continuity_check",
    "conditional_expectation",
    "ConditionalSolve",
    "counterexample_fixtures",
    "dct_check",
    "DensityOperator",
    "DimMismatch",
    "DominatedConvergenceReport",
    "effect_series_identity",
    "EffectSeriesVerdict",
    "expectation",
    "expectation_via_derivative",
    "Filtration",
    "gamma_equiv",
    "general_boxtimes",
    "geometric_mean",
    "hermitian_basis",
    "induced_measure",
    "InvalidMatrix",
    "is_abs_continuous",
    "is_martingale",
    "is_psd",
    "join_partitions",
    "MartingaleRun",
    "MartingaleVerdict",
    "max_entry_norm",
    "MeanDidNotConverge",
    "MeanZeroReport",
    "nonprincipal_rn",
    "NotAbsolutelyContinuous",
    "NotAnEffect",
    "NotConverged",
    "NotNested",
    "NotPositive",
    "NotProbabilityMeasure",
    "NotStrictlyPositiveEffect",
    "PartialSumsDiverge",
    "PartitionSigmaAlgebra",
    "pinv_psd",
    "Povm",
    "principal_rn",
    "probe_states",
    "ProbeStateSet",
    "psi_rho",
    "qmct_run",
    "QprobError",
    "QuantumRandomVariable",
    "range_projector",
    "rho_slice_check",
    "root_psd",
    "SampleSpace",
    "scalar_povm",
    "series_expectation",
    "SeriesResult",
    "sigma_member",
    "singular_atoms",
    "SpaceMismatch",
    "sqrt_psd",
    "tower_check",
    "trace_pair",
    "uw_as_limit",
    "validate_povm",
    "ZeroExpectation",
    "ZeroMeasure",
]
