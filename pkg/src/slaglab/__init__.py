"""slaglab: numerics for Lagrangian phase and quadratic Hessian equations.

The package is organized around small symmetric-matrix spectral machinery
(`spectral`), the scalar operators acting on Hessians (`operators`), exact
reference solutions (`catalog`), finite-difference grids and the damped Newton
Dirichlet solver (`grid`, `solver`), Lagrangian graph rotations and Legendre
transforms (`transforms`), eigenvalue-field diagnostics (`rank`), and pointwise
inequality verifiers (`viscosity`).  The `slaglab` console script exposes the
experiment drivers.
"""

from .catalog import (
    CATALOG_NAMES,
    CatalogEntry,
    SphereJet,
    complete_level_set,
    eval_li,
    eval_quadratic,
    eval_warren,
    get_entry,
    homogeneous2_extension,
    sample_level_set,
)
from .errors import (
    BranchError,
    ExpansionError,
    GridFormatError,
    JacobiConvergenceError,
    NewtonStagnationError,
    NonConvexFieldError,
    NotASolutionError,
    PoleError,
    SlaglabError,
)
from .grid import (
    GridField,
    boundary_mask,
    fd_gradient,
    fd_hessian,
    gradient_stack,
    hessian_stack,
    read_field,
    residual_field,
    write_field,
)
from .operators import (
    CRITICAL,
    SUBCRITICAL,
    SUPERCRITICAL,
    OperatorModel,
    PhaseSpec,
    ProbeReport,
    classify_phase,
    lambda_ratio,
    level_set_concavity_probe,
    lewy_modulus,
    sigma2_positive_branch,
    slag_linearization,
    slag_phase,
)
from .rank import (
    EigenFields,
    Hom2Audit,
    MinPrincipleReport,
    RankReport,
    SplitReport,
    eigen_fields,
    hom2_audit,
    min_principle_check,
    rank_report,
    splitting_detector,
)
from .solver import SolveConfig, SolveReport, solve_dirichlet
from .spectral import (
    EigenBlock,
    Spectrum,
    SymMatrix,
    eig_sym,
    is_direction_differentiable,
    one_sided_eig_derivative,
    sigma_k,
)
from .transforms import (
    GraphSample,
    LewyTransformResult,
    RotationParams,
    distance_expansion_check,
    eigen_rotation_map,
    expansion_bound,
    legendre_lewy_transform,
    legendre_transform,
    mobius_hessian_map,
    mu_from_lambda,
    rotate_graph,
    rotated_phase,
)
from .viscosity import (
    ViscosityReport,
    check_gradient_identity,
    check_higher_rank_inequality,
    check_inverse_convexity,
    check_supersolution_lambda1,
)

__all__ = [
    "BranchError",
    "CATALOG_NAMES",
    "CRITICAL",
    "CatalogEntry",
    "EigenBlock",
    "EigenFields",
    "ExpansionError",
    "GraphSample",
    "GridField",
    "GridFormatError",
    "Hom2Audit",
    "JacobiConvergenceError",
    "LewyTransformResult",
    "MinPrincipleReport",
    "NewtonStagnationError",
    "NonConvexFieldError",
    "NotASolutionError",
    "OperatorModel",
    "PhaseSpec",
    "PoleError",
    "ProbeReport",
    "RankReport",
    "RotationParams",
    "SUBCRITICAL",
    "SUPERCRITICAL",
    "SlaglabError",
    "SolveConfig",
    "SolveReport",
    "Spectrum",
    "SphereJet",
    "SplitReport",
    "SymMatrix",
    "ViscosityReport",
    "boundary_mask",
    "check_gradient_identity",
    "check_higher_rank_inequality",
    "check_inverse_convexity",
    "check_supersolution_lambda1",
    "classify_phase",
    "complete_level_set",
    "distance_expansion_check",
    "eig_sym",
    "eigen_fields",
    "eigen_rotation_map",
    "eval_li",
    "eval_quadratic",
    "eval_warren",
    "expansion_bound",
    "fd_gradient",
    "fd_hessian",
    "get_entry",
    "gradient_stack",
    "hessian_stack",
    "hom2_audit",
    "homogeneous2_extension",
    "is_direction_differentiable",
    "lambda_ratio",
    "legendre_lewy_transform",
    "legendre_transform",
    "level_set_concavity_probe",
    "lewy_modulus",
    "min_principle_check",
    "mobius_hessian_map",
    "mu_from_lambda",
    "one_sided_eig_derivative",
    "rank_report",
    "read_field",
    "residual_field",
    "rotate_graph",
    "rotated_phase",
    "sample_level_set",
    "sigma2_positive_branch",
    "sigma_k",
    "slag_linearization",
    "slag_phase",
    "solve_dirichlet",
    "splitting_detector",
    "write_field",
]

__version__ = "0.1.0"
