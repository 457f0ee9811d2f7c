"""Symbolic-numeric engine for regular and singular Lagrangian mechanics.

Takes a finite-dimensional Lagrangian, splits its velocities into a regular
sector (resolvable for momenta) and a degenerate sector, builds the physical
Hamiltonian and the degenerate-sector gauge structure through a mixed
Legendre-Clairaut transform, classifies the model, and integrates the
resulting dynamics.
"""

from .errors import (
    ClairautError,
    DomainError,
    ExprSyntaxError,
    FenchelError,
    GaugeInputError,
    IntegrabilityError,
    ModelError,
    NewtonError,
    RankDeficiencyError,
    RankVariationError,
    UnboundSymbolError,
)
from .expressions import (
    Call,
    Const,
    Expr,
    Neg,
    Pow,
    Prod,
    Quot,
    Sum,
    Sym,
    compile_evaluator,
    differentiate,
    evaluate,
    free_symbols,
    parse_expression,
    simplify,
    substitute,
)
from .clairaut_pde import (
    ClairautProblem,
    envelope_solution,
    general_solution,
    mixed_solution,
    pde_residual,
)
from .dynamics import (
    DiracReport,
    GaugeInput,
    IntegratorConfig,
    Trajectory,
    calibrate_sigma,
    d_alpha_h,
    degenerate_velocities,
    dirac_report,
    el_residual,
    evolve_observable,
    gauge_input,
    integrate,
)
from .fixtures import BUNDLED, bundled_model_path, bundled_model_text, load_bundled
from .gauge import (
    BObservable,
    ExprObservable,
    FiniteDifferenceObservable,
    GaugeClassification,
    bianchi_residual,
    bracket_gauge,
    bracket_new,
    classify,
    delta_b,
    field_strength,
    long_derivative,
    maxwell_current,
    phase_probes,
    poisson_phys,
)
from .manytime import (
    IntegrabilityReport,
    ManyTimeSystem,
    g_matrix,
    integrability_report,
    map_to_manytime,
)
from .model import (
    LagrangianModel,
    VariableSplit,
    check_rank_constancy,
    default_probes,
    hessian_matrix,
    load_model,
    momentum_name,
    parse_model,
    split_variables,
    velocity_name,
)
from .numerics import NewtonConfig, damped_newton, newton_with_restarts, rank_and_pivots
from .transform import ClairautTransform, PhasePoint, Resolution, fenchel_conjugate
from .verify import render_report, run_verification

__version__ = "0.1.0"

__all__ = [
    "BObservable", "BUNDLED", "Call", "ClairautError", "ClairautProblem",
    "ClairautTransform", "Const", "DiracReport", "DomainError", "Expr",
    "ExprObservable", "ExprSyntaxError", "FenchelError",
    "FiniteDifferenceObservable", "GaugeClassification", "GaugeInput",
    "GaugeInputError", "IntegrabilityError", "IntegrabilityReport",
    "IntegratorConfig", "LagrangianModel", "ManyTimeSystem", "ModelError",
    "Neg", "NewtonConfig", "NewtonError", "PhasePoint", "Pow", "Prod", "Quot",
    "RankDeficiencyError", "RankVariationError", "Resolution", "Sum", "Sym",
    "Trajectory", "UnboundSymbolError", "VariableSplit", "bianchi_residual",
    "bracket_gauge", "bracket_new", "bundled_model_path", "bundled_model_text",
    "calibrate_sigma", "check_rank_constancy", "classify", "compile_evaluator",
    "d_alpha_h", "damped_newton", "default_probes", "degenerate_velocities",
    "delta_b", "differentiate", "dirac_report", "el_residual",
    "envelope_solution", "evaluate", "evolve_observable", "fenchel_conjugate",
    "field_strength", "free_symbols", "g_matrix", "gauge_input",
    "general_solution", "hessian_matrix", "integrability_report", "integrate",
    "load_bundled", "load_model", "long_derivative", "map_to_manytime",
    "maxwell_current", "mixed_solution", "momentum_name",
    "newton_with_restarts", "parse_expression", "parse_model", "pde_residual",
    "phase_probes", "poisson_phys", "rank_and_pivots", "render_report",
    "run_verification", "simplify", "split_variables", "substitute",
    "velocity_name",
]
