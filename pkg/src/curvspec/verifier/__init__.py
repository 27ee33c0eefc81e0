"""Evaluators for the evolution formulas, identities and monotonicity hypotheses."""

from .formulas import (
    NotApplicable,
    fvl_on_path,
    lambda_via_a9,
    mono_tensor_T,
    mono_tensor_trace,
    rhs_appendix_rewrite,
    rhs_constant_R,
    rhs_fvl,
    rhs_fvrby,
    rhs_surface,
    scalar_curvature_rhs,
    variation_coefficient,
)
from .hypotheses import (
    HypothesisReport,
    Predicate,
    check_inthess,
    check_max_principle,
    check_monn,
    check_step_inequalities,
    check_T2,
    check_upper_bound,
    minimal_A,
    upper_bound,
)
from .report import EvolutionReport, EvolutionRow, SliceCheck, evolution_report, slice_check

__all__ = [
    "EvolutionReport",
    "EvolutionRow",
    "HypothesisReport",
    "NotApplicable",
    "Predicate",
    "SliceCheck",
    "check_inthess",
    "check_max_principle",
    "check_monn",
    "check_step_inequalities",
    "check_T2",
    "check_upper_bound",
    "evolution_report",
    "fvl_on_path",
    "lambda_via_a9",
    "minimal_A",
    "mono_tensor_T",
    "mono_tensor_trace",
    "rhs_appendix_rewrite",
    "rhs_constant_R",
    "rhs_fvl",
    "rhs_fvrby",
    "rhs_surface",
    "scalar_curvature_rhs",
    "slice_check",
    "upper_bound",
    "variation_coefficient",
]
