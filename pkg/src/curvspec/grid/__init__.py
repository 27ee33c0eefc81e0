"""Spectral periodic 2-torus backend with conformal metrics and arbitrary drift."""

from .spectral import PeriodicGrid, field_from_json, field_to_json
from .state import GridState, SolverError
from .identities import (
    Residual,
    check_aav,
    check_bbf,
    check_bochner,
    check_ibp,
    check_L_square_integral,
    check_Lprime,
    check_product_rule,
    check_reilly,
    conformal_path_variation,
    curvature,
    eigensolve,
    eta_divergence,
    hessian,
    op_L_apply,
    operator_variation,
    witten_apply,
)

__all__ = [
    "GridState",
    "PeriodicGrid",
    "Residual",
    "SolverError",
    "check_aav",
    "check_bbf",
    "check_bochner",
    "check_ibp",
    "check_L_square_integral",
    "check_Lprime",
    "check_product_rule",
    "check_reilly",
    "conformal_path_variation",
    "curvature",
    "eigensolve",
    "eta_divergence",
    "field_from_json",
    "field_to_json",
    "hessian",
    "op_L_apply",
    "operator_variation",
    "witten_apply",
]
