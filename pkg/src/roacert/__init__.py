"""Certified outer and worst-case inner approximations of finite-time
regions of attraction for unknown Lipschitz dynamics, computed from
state/velocity data by compiling polynomial cone memberships into
semidefinite programs."""

from .compiler import (
    ConicProblem,
    DecisionPoly,
    PolyExpr,
    QuadraticModuleSpec,
    SosProgram,
    constraint_count,
    membership_residual,
)
from .geometry import (
    Dataset,
    SemialgebraicSet,
    UncertaintyGraph,
    box_faces,
    contains_F,
    envelope_1d,
    gamma_polys,
    sample_F,
    validate_dataset,
)
from .oracle import (
    BuiltinSystem,
    best_case_roa_1d,
    builtin_system,
    dataset_from_system,
    integrate,
    toy_dataset,
    true_roa,
    worst_case_reach_1d,
)
from .poly import (
    Box,
    Polynomial,
    box_moments,
    lie_derivative,
    monomial_basis,
    parse_polynomial,
)
from .problems import (
    Certificate,
    ProblemConfig,
    build_inner,
    build_outer,
    extract_certificate,
    level_set,
    membership_grid,
    solve_roa,
)
from .solver import SolveOptions, SolveResult, solve
from .verify import (
    containment_check,
    inner_containment_check,
    residual_report,
    sweep_data_position,
)

__version__ = "0.1.0"
