"""Pointwise and integral identity checks for the drift Laplacian on the grid.

Every check returns a :class:`Residual`: the absolute defect together with the
magnitude of the largest term entering it, so callers may test either.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..types import EigenPair
from . import spectral as S
from .state import GridState


@dataclass(frozen=True)
class Residual:
    absolute: float
    scale: float

    @property
    def relative(self) -> float:
        if self.absolute == 0.0:
            return 0.0
        return self.absolute / max(self.scale, 1e-300)


def _sup(x) -> float:
    return float(np.max(np.abs(x)))


def _pointwise(lhs, *terms) -> Residual:
    rhs = sum(terms)
    return Residual(_sup(lhs - rhs), max([_sup(lhs)] + [_sup(t) for t in terms]))


def _integral(state: GridState, lhs, *terms) -> Residual:
    """Residual of ``int lhs dm = sum int term dm``; scaled by the L1 norms of the integrands."""
    value = state.integrate(lhs) - sum(state.integrate(t) for t in terms)
    scale = sum(state.integrate(np.abs(t)) for t in (lhs,) + terms)
    return Residual(abs(value), scale)


def _field(state: GridState, f, name="f"):
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = np.full(state.grid.shape, float(f))
    S.check_resolved(state.grid, f, name)
    return f


def curvature(state: GridState):
    return state.curvature()


def witten_apply(state: GridState, f) -> np.ndarray:
    return state.witten(_field(state, f))


def op_L_apply(state: GridState, f, c: float) -> np.ndarray:
    return state.op_L(_field(state, f), c)


def eigensolve(state: GridState, c: float, m: int) -> list[EigenPair]:
    return state.eigensolve(c, m)


def hessian(state: GridState, f) -> np.ndarray:
    return state.hessian(_field(state, f))


def eta_divergence(state: GridState, T) -> np.ndarray:
    return state.eta_divergence(np.asarray(T, dtype=float))


def check_product_rule(state: GridState, f1, f2) -> Residual:
    """``L(f1 f2) = f1 L f2 + f2 L f1 + 2 g(grad f1, grad f2)``."""
    f1, f2 = _field(state, f1, "f1"), _field(state, f2, "f2")
    L = state.witten
    return _pointwise(L(f1 * f2), f1 * L(f2), f2 * L(f1), 2 * state.inner(f1, f2))


def check_ibp(state: GridState, f, ell) -> Residual:
    """``int ell L f dm = -int g(grad ell, grad f) dm``."""
    f, ell = _field(state, f), _field(state, ell, "ell")
    return _integral(state, ell * state.witten(f), -state.inner(ell, f))


def check_L_square_integral(state: GridState, f) -> Residual:
    """``int L(f^2) dm = 0``."""
    f = _field(state, f)
    return _integral(state, state.witten(f * f))


def check_aav(state: GridState, pair: EigenPair, c: float) -> Residual:
    """``L(u^2)/2 = -lambda u^2 + |grad u|^2 - c R u^2`` for an eigenpair."""
    u = pair.vector.reshape(state.grid.shape)
    lam = pair.value
    R = state.scalar_curvature
    return _pointwise(0.5 * state.witten(u * u), -lam * u * u, state.grad_norm_sq(u), -c * R * u * u)


def bakry_emery_tensor(state: GridState, c: float) -> np.ndarray:
    """``Ric + Hess eta - (c R / 2) g``."""
    R = state.scalar_curvature
    g = state.metric_tensor()
    return (R / 2) * g + state.hessian(state.eta) - (c * R / 2) * g


def check_bochner(state: GridState, f, c: float) -> Residual:
    """Bochner-type formula for ``L + cR`` evaluated pointwise."""
    f = _field(state, f)
    R = state.scalar_curvature
    grad2 = state.grad_norm_sq(f)
    lhs = 0.5 * state.op_L(grad2, c)
    T = bakry_emery_tensor(state, c)
    return _pointwise(
        lhs,
        state.tensor_apply(T, f, f),
        state.inner(f, state.op_L(f, c)),
        state.tensor_norm_sq(state.hessian(f)),
        -0.5 * c * state.inner(R, f * f),
    )


def check_reilly(state: GridState, f, c: float) -> Residual:
    """Reilly-type integral formula; ``scale`` is ``int (L f + c R f)^2 dm``."""
    f = _field(state, f)
    R = state.scalar_curvature
    Lf = state.op_L(f, c)
    lhs = state.integrate(Lf * Lf)
    T = bakry_emery_tensor(state, c)
    rhs = state.integrate(state.tensor_apply(T, f, f) + state.tensor_norm_sq(state.hessian(f))) + c * state.integrate(
        R * (state.op_L(f * f, c) - 1.5 * state.grad_norm_sq(f))
    )
    return Residual(abs(lhs - rhs), lhs)


def conformal_path_variation(state: GridState, v) -> tuple:
    """``H = d/ds g(s)`` and ``h = tr H`` along ``g(s) = e^{2(w + s v)} delta``."""
    v = np.asarray(v, dtype=float)
    return 2 * v * state.metric_tensor(), 4 * v


def operator_variation(state: GridState, H, f, c: float, R_dot) -> np.ndarray:
    """First variation of ``L + cR`` applied to ``f`` for a metric variation ``H``.

    ``<dh/2 - div_eta H, df> - <H, Hess f> + c R' f``
    """
    h = state.trace(H)
    covector = 0.5 * state.grad0(h) - state.eta_divergence(H)
    return (
        state.covector_inner(covector, state.grad0(f))
        - state.contract(H, state.hessian(f))
        + c * np.asarray(R_dot) * f
    )


def curvature_variation(state: GridState, H) -> np.ndarray:
    """``-<Ric, H> - Delta h + div(div H)``."""
    R = state.scalar_curvature
    h = state.trace(H)
    ric = (R / 2) * state.metric_tensor()
    return -state.contract(ric, H) - state.laplacian(h) + state.divergence_covector(state.divergence_tensor(H))


def _check_delta(delta: float) -> None:
    if not 1e-6 <= delta <= 1e-2:
        raise ValueError(f"finite-difference step {delta} outside [1e-6, 1e-2]")


def path_states(state: GridState, v, delta: float) -> tuple:
    v = np.asarray(v, dtype=float)
    return state.with_fields(w=state.w + delta * v), state.with_fields(w=state.w - delta * v)


def check_Lprime(state: GridState, f, v, c: float, delta: float) -> Residual:
    """Central difference of ``(L + cR) f`` along a conformal path against its variation formula."""
    _check_delta(delta)
    f, v = _field(state, f), _field(state, v, "v")
    plus, minus = path_states(state, v, delta)
    R_dot = (plus.scalar_curvature - minus.scalar_curvature) / (2 * delta)
    fd = (plus.op_L(f, c) - minus.op_L(f, c)) / (2 * delta)
    H, _ = conformal_path_variation(state, v)
    return _pointwise(fd, operator_variation(state, H, f, c, R_dot))


def check_bbf(state: GridState, v, delta: float) -> Residual:
    """Central difference of ``R`` along a conformal path against the general variation formula."""
    _check_delta(delta)
    v = _field(state, v, "v")
    plus, minus = path_states(state, v, delta)
    fd = (plus.scalar_curvature - minus.scalar_curvature) / (2 * delta)
    H, _ = conformal_path_variation(state, v)
    return _pointwise(fd, curvature_variation(state, H))
