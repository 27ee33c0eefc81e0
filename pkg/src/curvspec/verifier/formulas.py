"""Right-hand sides of the eigenvalue and curvature evolution formulas.

Each evaluator takes a geometry state and one normalized eigenpair of
``-(L + cR)`` and returns the predicted ``d lambda / dt``. All of them read
the same weighted integrals from the backend (``state.integral_terms``), so
disagreements between formulas isolate algebra, not quadrature.
"""

from __future__ import annotations

import numpy as np

from ..params import FlowParams
from ..types import CurvspecError, EigenPair, IntegralTerms


class NotApplicable(CurvspecError):
    """A formula or check was requested outside its hypotheses."""


def variation_coefficient(state, params: FlowParams) -> tuple:
    """``(chi, h)`` with ``dg/dt = chi * g`` and ``h = tr(dg/dt) = n * chi``.

    Valid whenever ``Ric = (R/n) g``, which covers every backend here.
    """
    bundle = state.curvature()
    R = np.asarray(bundle.scalar, dtype=float)
    r = params.r_value(bundle.mean)
    chi = (2 * params.phi / params.n) * (R - r)
    return chi, params.n * chi


def _terms(state, pair: EigenPair, c: float, terms: IntegralTerms | None) -> IntegralTerms:
    return state.integral_terms(pair, c) if terms is None else terms


def rhs_fvl(state, pair: EigenPair, chi, R_dot, c: float) -> float:
    """``int [(h/4) L(u^2) - H(grad u, grad u) - c R' u^2] dm`` for ``H = chi g``.

    ``R_dot`` must come from outside (a finite difference along the
    trajectory or the prescribed path), never from the curvature evolution
    equation.
    """
    if R_dot is None:
        raise NotApplicable("the compact formula needs an independent curvature derivative")
    t = state.fvl_terms(pair, chi, R_dot, c)
    return t.h_quarter_Lu2 - t.H_grad - c * t.Rdot_u2


def rhs_fvrby(state, pair: EigenPair, params: FlowParams, terms: IntegralTerms | None = None) -> float:
    """General evolution formula in terms of curvature integrals."""
    t = _terms(state, pair, params.c, terms)
    n, a, rho, c = params.n, params.a, params.rho, params.c
    phi, psi = params.phi, params.psi
    lam = pair.value
    r = params.r_value(state.curvature().mean)
    return (
        2 * lam * r * phi / n
        - lam * phi * t.u2_R
        + (phi - 2 * rho) * t.R_grad2
        + 2 * a * t.ric_grad
        - c * ((phi - 2 * rho) * t.R2_u2 + 2 * a * t.ric2_u2 + psi * t.u2_lapR)
    )


def rhs_constant_R(state, pair: EigenPair, params: FlowParams, terms: IntegralTerms | None = None, rtol: float = 1e-8) -> float:
    """Evolution formula for spatially constant scalar curvature.

    With the average term active ``r = R`` and the familiar three-term form
    remains. Without it (``r = 0``) the extra term ``(2 lambda phi / n)(r - R)``
    is kept, which reduces to ``-2 lambda phi R / n``.
    """
    bundle = state.curvature()
    if not bundle.is_constant(rtol):
        raise NotApplicable(f"scalar curvature is not constant (spread {bundle.spread:.3e})")
    t = _terms(state, pair, params.c, terms)
    n, a, c, phi = params.n, params.a, params.c, params.phi
    lam = pair.value
    R = float(np.mean(bundle.scalar))
    r = params.r_value(bundle.mean)
    return -2 * a * lam * R / n + 2 * a * t.ric_grad - 2 * a * c * t.ric2_u2 + (2 * lam * phi / n) * (r - R)


def rhs_surface(state, pair: EigenPair, params: FlowParams, terms: IntegralTerms | None = None) -> float:
    """Two-dimensional form ``lambda r phi - lambda phi int u^2 R + c phi int u^2 Delta R``."""
    if params.n != 2:
        raise NotApplicable(f"surface formula needs n = 2, got n = {params.n}")
    t = _terms(state, pair, params.c, terms)
    lam, phi, c = pair.value, params.phi, params.c
    r = params.r_value(state.curvature().mean)
    return lam * r * phi - lam * phi * t.u2_R + c * phi * t.u2_lapR


def rhs_appendix_rewrite(state, pair: EigenPair, params: FlowParams, terms: IntegralTerms | None = None) -> float:
    """Seven-term rearrangement used for the drifted monotonicity argument.

    The rearrangement is derived with ``r = 0``; when the average term is
    active the ``2 lambda r phi / n`` term is added back.
    """
    t = _terms(state, pair, params.c, terms)
    n, a, rho, c = params.n, params.a, params.rho, params.c
    phi, psi = params.phi, params.psi
    lam = pair.value
    r = params.r_value(state.curvature().mean)
    k = 2 * c * psi - phi
    return (
        lam * k * t.u2_R
        + c * (2 * c * psi - (phi - 2 * rho)) * t.R2_u2
        - 2 * a * c * t.ric2_u2
        - (c * psi - (phi - 2 * rho)) * t.R_grad2
        + 2 * a * t.ric_grad
        + c * psi * t.R_u2_lapeta
        - c * psi * t.R_drift_grad
        + 2 * lam * r * phi / n
    )


def scalar_curvature_rhs(state, params: FlowParams) -> np.ndarray:
    """``2a|Ric|^2 + (2R/n)(phi r - rho n R) + psi Delta R`` per site."""
    bundle = state.curvature()
    R = np.asarray(bundle.scalar, dtype=float)
    n = params.n
    r = params.r_value(bundle.mean)
    return 2 * params.a * bundle.ric_norm_sq + (2 * R / n) * (params.phi * r - params.rho * n * R) + params.psi * state.laplacian(R)


def mono_tensor_trace(state, params: FlowParams) -> np.ndarray:
    """Trace of ``(2R/n)(phi r/n - rho R) g + (psi - 1) Hess R`` per site."""
    bundle = state.curvature()
    R = np.asarray(bundle.scalar, dtype=float)
    r = params.r_value(bundle.mean)
    return 2 * R * (params.phi * r / params.n - params.rho * R) + (params.psi - 1) * state.hessian_R_trace()


def mono_tensor_T(state, params: FlowParams) -> tuple:
    """The monotonicity tensor and its trace.

    The tensor is returned in chart components on the grid backend and as
    ``None`` elsewhere, where only the trace is available.
    """
    trace = mono_tensor_trace(state, params)
    tensor = None
    if hasattr(state, "metric_tensor"):
        bundle = state.curvature()
        R = np.asarray(bundle.scalar)
        r = params.r_value(bundle.mean)
        coef = (2 * R / params.n) * (params.phi * r / params.n - params.rho * R)
        tensor = coef * state.metric_tensor() + (params.psi - 1) * state.hessian(R)
    return tensor, trace


def lambda_via_a9(state, pair: EigenPair, v, c: float, delta: float) -> float:
    """``-int u (L + cR)' u dm`` along the conformal path ``w + s v``.

    The operator variation comes from the first-variation formula with the
    curvature derivative taken by central differences of step ``delta``.
    """
    from ..grid import GridState
    from ..grid.identities import _check_delta, conformal_path_variation, operator_variation, path_states

    if not isinstance(state, GridState):
        raise NotApplicable("the operator-variation route is implemented on the grid backend")
    _check_delta(delta)
    u = np.asarray(pair.vector).reshape(state.grid.shape)
    v = np.asarray(v, dtype=float)
    plus, minus = path_states(state, v, delta)
    R_dot = (plus.scalar_curvature - minus.scalar_curvature) / (2 * delta)
    H, _ = conformal_path_variation(state, v)
    return -state.integrate(u * operator_variation(state, H, u, c, R_dot))


def fvl_on_path(state, pair: EigenPair, v, c: float, delta: float) -> float:
    """Compact formula for the prescribed variation ``dg/ds = 2 v g``."""
    from ..grid.identities import _check_delta, path_states

    _check_delta(delta)
    v = np.asarray(v, dtype=float)
    plus, minus = path_states(state, v, delta)
    R_dot = (plus.scalar_curvature - minus.scalar_curvature) / (2 * delta)
    return rhs_fvl(state, pair, 2 * v, R_dot, c)
