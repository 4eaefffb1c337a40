"""Numerical lab for the supercritical deformed Hermitian-Yang-Mills equation on flat tori."""

__version__ = "0.1.0"

from .errors import (
    BracketFailure,
    ConeExit,
    ConeViolation,
    DHYMError,
    HypothesisFail,
    LinearSolveFailure,
    MagnitudeError,
    NearBoundaryWarning,
    NoConvergence,
    NonPositiveMetric,
    NormalizationError,
    PhaseOutOfRange,
    PositivityExit,
)
from .phase_algebra import (
    ConeReport,
    OperatorShift,
    PhaseWindow,
    Spectrum,
    arccot,
    chen_lemma_audit,
    dim2_reformulation_residual,
    dim3_reformulation_residual,
    elementary_symmetric,
    gamma_k_membership,
    lagrangian_phase,
    operator_gradient,
    operator_value,
    sigma_product,
    sk_ratio_concavity_probe,
    wang_yuan_audit,
    window_membership,
)
from .torus import (
    FieldRecipe,
    FourierMode,
    HermitianField,
    PotentialField,
    TorusGrid,
    cohomological_ct,
    complex_hessian,
    integrate,
    mixed_re_im,
    relative_spectrum,
    sup_normalize,
    volume_vt,
)
from .solver import (
    Backgrounds,
    PathState,
    SolveConfig,
    StabilityConstants,
    continuity_path,
    find_s1,
    find_T1,
    newton_solve,
    residual_field,
    solve_intermediate,
    solve_ma_exponential,
)

__all__ = [
    "BracketFailure",
    "ConeExit",
    "ConeViolation",
    "DHYMError",
    "HypothesisFail",
    "LinearSolveFailure",
    "MagnitudeError",
    "NearBoundaryWarning",
    "NoConvergence",
    "NonPositiveMetric",
    "NormalizationError",
    "PhaseOutOfRange",
    "PositivityExit",
    "ConeReport",
    "OperatorShift",
    "PhaseWindow",
    "Spectrum",
    "arccot",
    "chen_lemma_audit",
    "dim2_reformulation_residual",
    "dim3_reformulation_residual",
    "elementary_symmetric",
    "gamma_k_membership",
    "lagrangian_phase",
    "operator_gradient",
    "operator_value",
    "sigma_product",
    "sk_ratio_concavity_probe",
    "wang_yuan_audit",
    "window_membership",
    "FieldRecipe",
    "FourierMode",
    "HermitianField",
    "PotentialField",
    "TorusGrid",
    "cohomological_ct",
    "complex_hessian",
    "integrate",
    "mixed_re_im",
    "relative_spectrum",
    "sup_normalize",
    "volume_vt",
    "Backgrounds",
    "PathState",
    "SolveConfig",
    "StabilityConstants",
    "continuity_path",
    "find_s1",
    "find_T1",
    "newton_solve",
    "residual_field",
    "solve_intermediate",
    "solve_ma_exponential",
]
