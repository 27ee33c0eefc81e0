"""Homogeneous model geometries with closed-form curvature, spectra and flow.

Eigenfunctions are never sampled here. Every weighted integral of an
eigenfunction reduces to ``lambda``, ``R`` and ``n`` through the Einstein
identity ``Ric = (R/n) g`` and the normalization ``int u^2 dm = 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .params import FlowParams
from .types import (
    CurvatureBundle,
    EigenPair,
    FVLTerms,
    IntegralTerms,
    NumericalAbort,
)

_EPS = 1e-300


def harmonic_multiplicity(n: int, k: int) -> int:
    """Dimension of degree-``k`` spherical harmonics on ``S^n``."""
    if k == 0:
        return 1
    return math.comb(n + k, n) - math.comb(n + k - 2, n)


@dataclass(frozen=True)
class SphereState:
    """Round ``S^n`` of squared radius ``radius_sq`` with zero drift."""

    n: int
    radius_sq: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("sphere dimension must be >= 2")
        if not self.radius_sq > 0:
            raise ValueError(f"radius_sq must be positive, got {self.radius_sq}")

    # evolving variable protocol
    @property
    def variable(self) -> float:
        return self.radius_sq

    def evolve(self, delta: float) -> "SphereState":
        new = self.radius_sq + delta
        if not new > 0:
            raise NumericalAbort(f"sphere collapsed: radius_sq={new}")
        return SphereState(self.n, new)

    @property
    def scalar_curvature(self) -> float:
        return self.n * (self.n - 1) / self.radius_sq

    def curvature(self) -> CurvatureBundle:
        return sphere_curvature(self)

    def flow_velocity(self, params: FlowParams) -> float:
        return sphere_flow_derivative(self, params)

    def cfl_limit(self, params: FlowParams, safety: float = 0.1) -> float:
        return safety * self.radius_sq / (2 * (self.n - 1) * abs(params.phi) + _EPS)

    def eigenvalue(self, k: int, c: float = 0.0) -> float:
        if k < 0:
            raise ValueError("degree must be non-negative")
        return k * (k + self.n - 1) / self.radius_sq - c * self.scalar_curvature

    def eigensolve(self, c: float, m: int) -> list[EigenPair]:
        """First ``m`` eigenvalue clusters, one pair per harmonic degree."""
        return [
            EigenPair(self.eigenvalue(k, c), None, harmonic_multiplicity(self.n, k), k)
            for k in range(m)
        ]

    def integral_terms(self, pair: EigenPair, c: float) -> IntegralTerms:
        R = self.scalar_curvature
        lam = pair.value
        grad2 = lam + c * R
        return IntegralTerms(
            u2=1.0,
            grad2=grad2,
            u2_R=R,
            R_grad2=R * grad2,
            ric_grad=R / self.n * grad2,
            ric2_u2=R * R / self.n,
            R2_u2=R * R,
            u2_lapR=0.0,
            R_u2_lapeta=0.0,
            R_drift_grad=R * grad2,
        )

    def fvl_terms(self, pair: EigenPair, chi, r_dot, c: float) -> FVLTerms:
        # chi and r_dot are spatially constant, so h L(u^2) integrates to zero
        grad2 = pair.value + c * self.scalar_curvature
        return FVLTerms(0.0, float(np.mean(chi)) * grad2, float(np.mean(r_dot)))

    def hessian_norm_integral(self, pair: EigenPair, c: float) -> float:
        """``int |Hess u|^2 dm`` from the integrated Bochner formula."""
        R = self.scalar_curvature
        lap = pair.value + c * R
        return lap * lap - R / self.n * lap

    def laplacian(self, field):
        return np.zeros_like(np.asarray(field, dtype=float))

    def hessian_R_trace(self):
        return np.zeros(())


def sphere_curvature(state: SphereState) -> CurvatureBundle:
    R = state.scalar_curvature
    return CurvatureBundle(
        scalar=np.array(R),
        ric_coefficient=np.array(R / state.n),
        ric_norm_sq=np.array(R * R / state.n),
        mean=R,
        n=state.n,
    )


def sphere_flow_derivative(state: SphereState, params: FlowParams) -> float:
    """Time derivative of ``radius_sq`` under the unified flow.

    With ``Ric = (R/n) g`` the flow is ``g' = (2 phi / n)(R - r) g``; the
    average term makes the sphere a fixed point, otherwise the slope is the
    constant ``2 (n-1) phi``.
    """
    if params.n != state.n:
        raise ValueError(f"params.n={params.n} does not match sphere dimension {state.n}")
    if params.use_average_term:
        return 0.0
    return 2.0 * (state.n - 1) * params.phi


def sphere_eigenvalue(state: SphereState, k: int, params: FlowParams, eta=0.0):
    """Degree-``k`` eigenvalue of ``-(L + cR)`` and its multiplicity."""
    if np.any(np.asarray(eta) != 0):
        raise ValueError("no closed form for a non-constant drift on the sphere")
    return state.eigenvalue(k, params.c), harmonic_multiplicity(state.n, k)


def sphere_rhs_closed_form(state: SphereState, k: int, params: FlowParams) -> float:
    """Eigenvalue velocity from the general evolution formula with Einstein substitutions."""
    n, R, c = state.n, state.scalar_curvature, params.c
    a, rho, phi, psi = params.a, params.rho, params.phi, params.psi
    lam = state.eigenvalue(k, c)
    r = params.r_value(R)
    grad2 = lam + c * R
    lap_R = 0.0
    return (
        2 * lam * r * phi / n
        - lam * phi * R
        + (phi - 2 * rho) * R * grad2
        + 2 * a * (R / n) * grad2
        - c * (R * R * (phi - 2 * rho) + 2 * a * R * R / n + psi * lap_R)
    )


@dataclass(frozen=True)
class FlatTorusState:
    """Flat ``T^n`` with the given side lengths; a stationary point of every flow."""

    n: int
    side_lengths: tuple

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.side_lengths)
        if len(lengths) != self.n or self.n < 1:
            raise ValueError("need one side length per dimension")
        if any(not x > 0 for x in lengths):
            raise ValueError("side lengths must be positive")
        object.__setattr__(self, "side_lengths", lengths)

    @property
    def variable(self) -> np.ndarray:
        return np.asarray(self.side_lengths)

    def evolve(self, delta) -> "FlatTorusState":
        return FlatTorusState(self.n, tuple(np.asarray(self.side_lengths) + delta))

    def curvature(self) -> CurvatureBundle:
        z = np.zeros(())
        return CurvatureBundle(z, z.copy(), z.copy(), 0.0, self.n)

    def flow_velocity(self, params: FlowParams) -> np.ndarray:
        return np.zeros(self.n)

    def cfl_limit(self, params: FlowParams, safety: float = 0.1) -> float:
        return math.inf

    def eigenvalue(self, index) -> float:
        return torus_eigenvalue(self, index)

    def eigensolve(self, c: float, m: int) -> list[EigenPair]:
        """First ``m`` distinct eigenvalues with their lattice multiplicities."""
        kmax = 1
        while True:
            rng = range(-kmax, kmax + 1)
            vals = sorted(self.eigenvalue(ix) for ix in itertools.product(rng, repeat=self.n))
            distinct = []
            for v in vals:
                if distinct and math.isclose(v, distinct[-1][0], rel_tol=1e-12, abs_tol=1e-12):
                    distinct[-1][1] += 1
                else:
                    distinct.append([v, 1])
            # every eigenvalue below the smallest excluded shell is complete
            shell = min((2 * math.pi * (kmax + 1) / L) ** 2 for L in self.side_lengths)
            done = [d for d in distinct if d[0] < shell]
            if len(done) >= m:
                return [EigenPair(v, None, mult, None) for v, mult in done[:m]]
            kmax += 1

    def integral_terms(self, pair: EigenPair, c: float) -> IntegralTerms:
        return IntegralTerms(u2=1.0, grad2=pair.value)

    def fvl_terms(self, pair: EigenPair, chi, r_dot, c: float) -> FVLTerms:
        return FVLTerms(0.0, float(np.mean(chi)) * pair.value, float(np.mean(r_dot)))

    def hessian_norm_integral(self, pair: EigenPair, c: float) -> float:
        return pair.value * pair.value

    def laplacian(self, field):
        return np.zeros_like(np.asarray(field, dtype=float))

    def hessian_R_trace(self):
        return np.zeros(())


def torus_eigenvalue(state: FlatTorusState, index) -> float:
    index = tuple(index)
    if len(index) != state.n:
        raise ValueError("lattice vector has the wrong dimension")
    return float(sum((2 * math.pi * k / L) ** 2 for k, L in zip(index, state.side_lengths)))
