"""Stochastic solvers for semilinear PDEs built from branching recipes.

The symbolic side (jets, series, recipes) maps branching recipes to limiting
nonlinearities and back; the Monte Carlo side (engine) simulates the tagged
branching diffusion; the oracle side provides deterministic reference
solutions; the CLI/harness orchestrates experiments and comparisons.
"""

from .jets import JetPolynomial, parse_jet_polynomial
from .series import BetaSeries, NonUnitLeadingTerm, series_compose
from .recipes import (
    BranchingRecipe,
    DivergentTerm,
    ElementaryBranching,
    ExistenceReport,
    Infeasible,
    RescalingKind,
    UnderDetermined,
    UnsupportedKind,
    check_existence,
    compile_recipe,
    cubic_recipe,
    expand_elementary,
    gradient_quadratic_recipe,
    identity_recipe,
    psi_limit,
)
from .functions import (
    BoundaryFunction,
    BoundaryOutOfRange,
    Constant,
    Cosine,
    Exponential,
    Polynomial,
    derivative_sum_bound,
    eval_derivative,
    invert_boundary,
    rescale_forward,
)
from .engine import (
    DegenerateEstimate,
    EstimateReport,
    EstimatorAccumulator,
    IllConditionedFit,
    Particle,
    ParticleTag,
    PopulationCapExceeded,
    ReplicaOutcome,
    RunSpec,
    estimate,
    exit_functional_mckean,
    exit_functional_super,
    extrapolate_beta,
    merge_accumulators,
    run_replica,
)
from .oracle import (
    BlowUpDetected,
    FieldSolution,
    Grid1D,
    GridMismatch,
    SemilinearSpec,
    StabilityViolation,
    error_norms,
    heat_kernel_expectation,
    solve_homogeneous_ode,
    solve_semilinear,
)

__version__ = "0.1.0"
