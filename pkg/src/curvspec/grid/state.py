"""Conformally flat metrics ``e^{2w} (dx^2 + dy^2)`` on a periodic 2-torus."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from ..expr import evaluate
from ..params import FlowParams
from ..types import CurvatureBundle, CurvspecError, EigenPair, FVLTerms, IntegralTerms
from . import spectral as S
from .spectral import PeriodicGrid

DENSE_LIMIT = 1024
MAX_EIGENPAIRS = 32


class SolverError(CurvspecError):
    pass


class GridState:
    """Periodic conformal surface with a fixed drifting function ``eta``.

    Parameters
    ----------
    grid : PeriodicGrid
    w : ndarray
        Log conformal factor sampled on the grid.
    eta : ndarray, optional
        Drifting function; zero when omitted.
    average : {"weighted", "riemannian"}
        Measure used for the average curvature ``r``.
    """

    n = 2

    def __init__(self, grid: PeriodicGrid, w=None, eta=None, average: str = "weighted", check: bool = True):
        self.grid = grid
        self.w = np.zeros(grid.shape) if w is None else np.asarray(w, dtype=float).reshape(grid.shape)
        self.eta = np.zeros(grid.shape) if eta is None else np.asarray(eta, dtype=float).reshape(grid.shape)
        if average not in ("weighted", "riemannian"):
            raise ValueError(f"unknown average {average!r}")
        self.average = average
        if check:
            S.check_resolved(grid, self.w, "w")
            S.check_resolved(grid, self.eta, "eta")
        self._cache = {}

    @classmethod
    def from_expressions(cls, shape=(64, 64), w="0", eta="0", periods=None, constants=None, average="weighted"):
        grid = PeriodicGrid(shape, periods or (2 * math.pi, 2 * math.pi))
        X, Y = grid.coords()
        xy = {"x": X, "y": Y}
        return cls(grid, evaluate(w, xy, constants), evaluate(eta, xy, constants), average)

    def with_fields(self, w=None, eta=None) -> "GridState":
        return GridState(
            self.grid,
            self.w if w is None else w,
            self.eta if eta is None else eta,
            self.average,
            check=False,
        )

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # --- metric data ---------------------------------------------------
    @property
    def inv_metric(self) -> np.ndarray:
        """``e^{-2w}``, the conformal factor of the inverse metric."""
        return self._cached("inv_metric", lambda: np.exp(-2 * self.w))

    @property
    def mass(self) -> np.ndarray:
        """Weighted cell mass ``e^{-eta + 2w} h_x h_y``."""
        return self._cached("mass", lambda: np.exp(-self.eta + 2 * self.w) * self.grid.cell_area)

    @property
    def area_element(self) -> np.ndarray:
        return self._cached("area", lambda: np.exp(2 * self.w) * self.grid.cell_area)

    def grad0(self, f) -> np.ndarray:
        return S.gradient0(self.grid, f)

    def integrate(self, f) -> float:
        """``int f dm`` as a lattice sum in fixed order."""
        return float(np.sum(np.asarray(f) * self.mass))

    def integrate_riemannian(self, f) -> float:
        return float(np.sum(np.asarray(f) * self.area_element))

    def inner(self, f1, f2) -> np.ndarray:
        """Pointwise ``g(grad f1, grad f2)``."""
        a, b = self.grad0(f1), self.grad0(f2)
        return self.inv_metric * (a[0] * b[0] + a[1] * b[1])

    def covector_inner(self, alpha, beta) -> np.ndarray:
        return self.inv_metric * (alpha[0] * beta[0] + alpha[1] * beta[1])

    def grad_norm_sq(self, f) -> np.ndarray:
        return self.inner(f, f)

    def laplacian(self, f) -> np.ndarray:
        return self.inv_metric * S.laplacian0(self.grid, f)

    def witten(self, f) -> np.ndarray:
        """``L f = Delta f - g(grad eta, grad f)``."""
        ge = self._cached("grad_eta", lambda: self.grad0(self.eta))
        gf = self.grad0(f)
        return self.inv_metric * (S.laplacian0(self.grid, f) - ge[0] * gf[0] - ge[1] * gf[1])

    def op_L(self, f, c: float) -> np.ndarray:
        return self.witten(f) + c * self.scalar_curvature * f

    # --- curvature -----------------------------------------------------
    @property
    def scalar_curvature(self) -> np.ndarray:
        return self._cached("R", lambda: -2 * self.inv_metric * S.laplacian0(self.grid, self.w))

    def mean_curvature(self) -> float:
        R = self.scalar_curvature
        if self.average == "weighted":
            return self.integrate(R) / float(np.sum(self.mass))
        return self.integrate_riemannian(R) / float(np.sum(self.area_element))

    def curvature(self) -> CurvatureBundle:
        R = self.scalar_curvature
        return CurvatureBundle(R, R / 2, R * R / 2, self.mean_curvature(), 2)

    def christoffel(self) -> np.ndarray:
        """``Gamma[k, i, j]`` of the conformal metric."""

        def build():
            dw = self.grad0(self.w)
            G = np.zeros((2, 2, 2) + self.grid.shape)
            for k in range(2):
                for i in range(2):
                    for j in range(2):
                        val = 0.0
                        if i == k:
                            val = val + dw[j]
                        if j == k:
                            val = val + dw[i]
                        if i == j:
                            val = val - dw[k]
                        G[k, i, j] = val
            return G

        return self._cached("christoffel", build)

    def hessian(self, f) -> np.ndarray:
        """Covariant Hessian components ``(nabla^2 f)_{ij}`` in the chart."""
        H = S.hessian0(self.grid, f)
        df = self.grad0(f)
        G = self.christoffel()
        return H - np.einsum("kij...,k...->ij...", G, df)

    def tensor_norm_sq(self, T) -> np.ndarray:
        return self.inv_metric**2 * np.einsum("ij...,ij...->...", T, T)

    def contract(self, A, B) -> np.ndarray:
        """``<A, B>`` of two covariant 2-tensors."""
        return self.inv_metric**2 * np.einsum("ij...,ij...->...", A, B)

    def tensor_apply(self, T, f1, f2) -> np.ndarray:
        """``T(grad f1, grad f2)`` for a covariant 2-tensor ``T``."""
        a, b = self.grad0(f1), self.grad0(f2)
        return self.inv_metric**2 * np.einsum("ij...,i...,j...->...", T, a, b)

    def metric_tensor(self) -> np.ndarray:
        e2w = np.exp(2 * self.w)
        z = np.zeros_like(e2w)
        return np.array([[e2w, z], [z, e2w]])

    def trace(self, T) -> np.ndarray:
        return self.inv_metric * (T[0, 0] + T[1, 1])

    def divergence_covector(self, omega) -> np.ndarray:
        """``g^{ij} (d_i omega_j - Gamma^k_{ij} omega_k)``."""
        G = self.christoffel()
        d = np.array([[S.d1(self.grid, omega[j], i) for j in range(2)] for i in range(2)])
        cov = d - np.einsum("kij...,k...->ij...", G, omega)
        return self.inv_metric * (cov[0, 0] + cov[1, 1])

    def divergence_tensor(self, T) -> np.ndarray:
        """``(div T)_j = g^{ik} nabla_k T_{ij}`` for a symmetric covariant 2-tensor."""
        G = self.christoffel()
        out = np.zeros((2,) + self.grid.shape)
        for j in range(2):
            acc = 0.0
            for i in range(2):
                k = i
                term = S.d1(self.grid, T[i, j], k)
                term = term - sum(G[m, k, i] * T[m, j] + G[m, k, j] * T[i, m] for m in range(2))
                acc = acc + term
            out[j] = self.inv_metric * acc
        return out

    def eta_divergence(self, T) -> np.ndarray:
        """``div T - d eta o T`` as a covector field."""
        de = self.grad0(self.eta)
        contracted = self.inv_metric * np.einsum("ij...,i...->j...", T, de)
        return self.divergence_tensor(T) - contracted

    def hessian_R_trace(self) -> np.ndarray:
        return self.laplacian(self.scalar_curvature)

    # --- flow ----------------------------------------------------------
    @property
    def variable(self) -> np.ndarray:
        return self.w

    def evolve(self, delta) -> "GridState":
        return self.with_fields(w=self.w + delta)

    def flow_velocity(self, params: FlowParams) -> np.ndarray:
        """``dw/dt = phi (R - r) / 2``; in 2D the unified flow is ``g' = phi (R - r) g``."""
        if params.n != 2:
            # a flat surface is a cross-section of a flat product, which every flow fixes
            if np.max(np.abs(self.scalar_curvature)) > 1e-12:
                raise ValueError("the grid backend is two-dimensional; higher n needs a flat surface")
            return np.zeros_like(self.w)
        r = params.r_value(self.mean_curvature())
        return params.phi * (self.scalar_curvature - r) / 2

    def cfl_limit(self, params: FlowParams, safety: float = 0.1) -> float:
        R = self.scalar_curvature
        r = params.r_value(self.mean_curvature())
        reaction = safety / (float(np.max(np.abs(params.phi * (R - r)))) + 1e-300)
        kmax2 = sum((math.pi / h) ** 2 for h in self.grid.spacing)
        # explicit RK4 is stable on the negative real axis up to about -2.78
        diffusion = 2.5 / (abs(params.phi) * float(np.max(self.inv_metric)) * kmax2 + 1e-300)
        return min(reaction, diffusion)

    # --- weak form and eigenproblem --------------------------------------
    def _face_weights(self):
        def build():
            return [np.exp(-S.shift_half(self.grid, self.eta, ax)) for ax in range(2)]

        return self._cached("face_weights", build)

    def stiffness_apply(self, u) -> np.ndarray:
        """``K u`` for ``K = h_x h_y sum_a G_a^T diag(e^{-eta} at faces) G_a``."""
        u = np.asarray(u, dtype=float).reshape(self.grid.shape)
        cw = self._face_weights()
        out = sum(
            S.stagger_grad_transpose(self.grid, cw[ax] * S.stagger_grad(self.grid, u, ax), ax)
            for ax in range(2)
        )
        return out * self.grid.cell_area

    def assemble(self, c: float = 0.0):
        """Dense symmetric stiffness, potential-shifted operator and diagonal mass.

        Returns ``(K, A, mass)`` with ``A = K - c diag(R * mass)``; ``K`` and
        ``A`` are symmetrized so they are bitwise symmetric.
        """
        cw = self._face_weights()
        K = np.zeros((self.grid.size, self.grid.size))
        for ax in range(2):
            G = S.stagger_matrix(self.grid, ax)
            K += G.T @ (cw[ax].ravel()[:, None] * G)
        K *= self.grid.cell_area
        K = 0.5 * (K + K.T)
        m = self.mass.ravel()
        A = K - np.diag(c * self.scalar_curvature.ravel() * m)
        return K, A, m

    def eigensolve(self, c: float, m: int, tol: float = 1e-13) -> list[EigenPair]:
        """Lowest ``m`` eigenpairs of ``(K - c R M) u = lambda M u``, ascending and weighted-normalized."""
        if not 1 <= m <= MAX_EIGENPAIRS:
            raise ValueError(f"eigenpair count must be in [1, {MAX_EIGENPAIRS}]")
        mass = self.mass.ravel()
        assert np.all(mass > 0), "mass must be positive"
        n = self.grid.size
        if n <= DENSE_LIMIT:
            _, A, _ = self.assemble(c)
            vals, vecs = scipy.linalg.eigh(A, np.diag(mass), subset_by_index=(0, m - 1))
        else:
            vals, vecs = self._arpack(c, m, mass, tol)
        return _package_pairs(vals, vecs, mass, self.grid.shape)

    def _arpack(self, c, m, mass, tol):
        n = self.grid.size
        potential = c * self.scalar_curvature.ravel() * mass
        # lambda >= min(-c R) by the Rayleigh quotient, so the shifted operator is SPD
        sigma = float(np.min(-c * self.scalar_curvature)) - 1.0

        def apply_A(u):
            return self.stiffness_apply(u).ravel() - potential * u

        def apply_shifted(u):
            return apply_A(u) - sigma * mass * u

        kx, ky = self.grid.wavenumbers(0), self.grid.wavenumbers(1)
        k2 = kx * kx + ky * ky
        cbar = float(np.mean(self._face_weights()[0]))
        diag = cbar * k2 + float(np.mean((-sigma * mass - potential) / self.grid.cell_area))

        def precondition(r):
            R = np.fft.fft2(r.reshape(self.grid.shape)) / self.grid.cell_area
            return np.fft.ifft2(R / diag).real.ravel()

        shifted = LinearOperator((n, n), matvec=apply_shifted, dtype=float)
        P = LinearOperator((n, n), matvec=precondition, dtype=float)

        def solve(b):
            x, info = cg(shifted, b, rtol=1e-14, atol=0.0, M=P, maxiter=2000)
            if info != 0:
                raise SolverError(f"inner CG solve did not converge (info={info})")
            return x

        v0 = np.random.default_rng(12345).standard_normal(n)
        try:
            vals, vecs = eigsh(
                LinearOperator((n, n), matvec=apply_A, dtype=float),
                k=m,
                M=sp.diags(mass),
                sigma=sigma,
                OPinv=LinearOperator((n, n), matvec=solve, dtype=float),
                which="LM",
                tol=tol,
                v0=v0,
                ncv=min(n, max(2 * m + 1, m + 20)),
            )
        except Exception as exc:  # ARPACK raises its own exception types
            raise SolverError(f"eigensolver failed: {exc}") from exc
        order = np.argsort(vals)
        return vals[order], vecs[:, order]

    # --- eigenfunction integrals ------------------------------------------
    def integral_terms(self, pair: EigenPair, c: float) -> IntegralTerms:
        u = pair.vector.reshape(self.grid.shape)
        R = self.scalar_curvature
        du = self.grad0(u)
        de = self.grad0(self.eta)
        grad2 = self.inv_metric * (du[0] ** 2 + du[1] ** 2)
        drift = du - u * de
        eta_u = self.inv_metric * (de[0] * du[0] + de[1] * du[1])
        u2 = u * u
        I = self.integrate
        return IntegralTerms(
            u2=I(u2),
            grad2=I(grad2),
            u2_R=I(u2 * R),
            R_grad2=I(R * grad2),
            ric_grad=I(R / 2 * grad2),
            ric2_u2=I(R * R / 2 * u2),
            R2_u2=I(R * R * u2),
            u2_lapR=I(u2 * self.laplacian(R)),
            R_u2_lapeta=I(R * u2 * self.laplacian(self.eta)),
            R_drift_grad=I(R * self.inv_metric * (drift[0] ** 2 + drift[1] ** 2)),
            eta_grad_u_sq=I(eta_u**2),
            hess_eta_uu=I(self.tensor_apply(self.hessian(self.eta), u, u)),
            eta_grad_u2=I(self.inner(self.eta, u2)),
        )

    def fvl_terms(self, pair: EigenPair, chi, r_dot, c: float) -> FVLTerms:
        u = pair.vector.reshape(self.grid.shape)
        h = 2 * np.asarray(chi)
        return FVLTerms(
            self.integrate(h / 4 * self.witten(u * u)),
            self.integrate(chi * self.grad_norm_sq(u)),
            self.integrate(np.asarray(r_dot) * u * u),
        )

    def hessian_norm_integral(self, pair: EigenPair, c: float) -> float:
        u = pair.vector.reshape(self.grid.shape)
        return self.integrate(self.tensor_norm_sq(self.hessian(u)))

    def overlap(self, u, v) -> float:
        return float(np.sum(np.asarray(u).ravel() * np.asarray(v).ravel() * self.mass.ravel()))


def _package_pairs(vals, vecs, mass, shape) -> list[EigenPair]:
    pairs = []
    for j in range(vals.size):
        u = vecs[:, j]
        u = u / math.sqrt(float(np.sum(u * u * mass)))
        pivot = np.flatnonzero(np.abs(u) > 1e-8 * np.max(np.abs(u)))[0]
        if u[pivot] < 0:
            u = -u
        pairs.append(EigenPair(float(vals[j]), u.reshape(shape)))
    return pairs
