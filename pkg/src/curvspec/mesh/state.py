"""Discrete conformal metrics on closed triangle meshes.

The metric is carried by edge lengths ``l_ij = exp((w_i + w_j)/2) * l0_ij``.
Vertex positions are kept for display and never updated.
"""

from __future__ import annotations

import json
import math

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from ..params import FlowParams
from ..types import (
    CurvatureBundle,
    CurvspecError,
    EigenPair,
    FVLTerms,
    IntegralTerms,
    MeshError,
    TriangleInequalityError,
)
from . import io as mio

DENSE_LIMIT = 1024
MAX_EIGENPAIRS = 32


class MeshSolverError(CurvspecError):
    pass


class MeshState:
    """Closed triangulated surface with conformal factor ``w`` and drift ``eta``.

    Parameters
    ----------
    vertices : ndarray, shape (nv, 3)
    topology : Topology
    base_lengths : ndarray, shape (ne,)
        Edge lengths of the metric at ``w = 0``.
    w, eta : ndarray, shape (nv,), optional
    average : {"weighted", "riemannian"}
    """

    n = 2

    def __init__(self, vertices, topology: mio.Topology, base_lengths, w=None, eta=None, average="weighted"):
        self.vertices = np.asarray(vertices, dtype=float)
        self.topology = topology
        self.base_lengths = np.asarray(base_lengths, dtype=float)
        nv = topology.n_vertices
        self.w = np.zeros(nv) if w is None else np.asarray(w, dtype=float).copy()
        self.eta = np.zeros(nv) if eta is None else np.asarray(eta, dtype=float).copy()
        if self.w.shape != (nv,) or self.eta.shape != (nv,):
            raise ValueError("w and eta need one value per vertex")
        if self.base_lengths.shape != (len(topology.edges),) or np.any(self.base_lengths <= 0):
            raise MeshError("need one positive base length per edge")
        if average not in ("weighted", "riemannian"):
            raise ValueError(f"unknown average {average!r}")
        self.average = average
        self._cache = {}
        self._geometry()  # validates the triangle inequality and face areas

    # --- construction ----------------------------------------------------
    @classmethod
    def from_arrays(cls, vertices, faces, base_lengths=None, **kw) -> "MeshState":
        topo = mio.build_topology(faces, len(vertices))
        if base_lengths is None:
            base_lengths = mio.edge_lengths_from_positions(vertices, topo.edges)
        return cls(vertices, topo, base_lengths, **kw)

    @classmethod
    def load(cls, path, eta_csv=None, **kw) -> "MeshState":
        """Read an OFF/OBJ mesh and an optional ``vertex_index,value`` drift file."""
        V, F = mio.read_mesh(path)
        state = cls.from_arrays(V, F, **kw)
        if eta_csv is not None:
            state = state.with_fields(eta=mio.read_vertex_csv(eta_csv, len(V)))
        return state

    @classmethod
    def icosphere(cls, level: int, radius: float = 1.0, **kw) -> "MeshState":
        V, F = mio.icosphere(level, radius)
        return cls.from_arrays(V, F, **kw)

    @classmethod
    def flat_torus(cls, nx: int, ny: int, lx=2 * math.pi, ly=2 * math.pi, **kw) -> "MeshState":
        V, F, lengths = mio.flat_torus(nx, ny, lx, ly)
        return cls.from_arrays(V, F, lengths, **kw)

    def with_fields(self, w=None, eta=None) -> "MeshState":
        return MeshState(
            self.vertices,
            self.topology,
            self.base_lengths,
            self.w if w is None else w,
            self.eta if eta is None else eta,
            self.average,
        )

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def faces(self) -> np.ndarray:
        return self.topology.faces

    @property
    def n_vertices(self) -> int:
        return self.topology.n_vertices

    # --- geometry ----------------------------------------------------------
    @property
    def edge_lengths(self) -> np.ndarray:
        e = self.topology.edges
        return np.exp(0.5 * (self.w[e[:, 0]] + self.w[e[:, 1]])) * self.base_lengths

    def _geometry(self):
        def build():
            L = self.edge_lengths[self.topology.face_edges]
            a, b, c = L[:, 0], L[:, 1], L[:, 2]
            slack = np.minimum(np.minimum(b + c - a, a + c - b), a + b - c)
            bad = np.flatnonzero(~(slack > 1e-14 * L.max(axis=1)))
            if bad.size:
                raise TriangleInequalityError(int(bad[0]), L[bad[0]])
            # Kahan's stable Heron formula on sorted sides
            s = np.sort(L, axis=1)[:, ::-1]
            x, y, z = s[:, 0], s[:, 1], s[:, 2]
            area = 0.25 * np.sqrt((x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z)))
            cos = np.stack(
                [(b * b + c * c - a * a) / (2 * b * c), (a * a + c * c - b * b) / (2 * a * c), (a * a + b * b - c * c) / (2 * a * b)],
                axis=1,
            )
            angles = np.arccos(np.clip(cos, -1.0, 1.0))
            sin = np.stack([2 * area / (b * c), 2 * area / (a * c), 2 * area / (a * b)], axis=1)
            cot = cos / sin
            return L, area, angles, cot

        return self._cached("geometry", build)

    @property
    def face_areas(self) -> np.ndarray:
        return self._geometry()[1]

    @property
    def vertex_areas(self) -> np.ndarray:
        """Barycentric areas: a third of every incident triangle."""
        return self._cached(
            "vertex_areas",
            lambda: np.bincount(self.faces.ravel(), np.repeat(self.face_areas / 3, 3), self.n_vertices),
        )

    @property
    def angle_defects(self) -> np.ndarray:
        angles = self._geometry()[2]
        return self._cached(
            "defects", lambda: 2 * math.pi - np.bincount(self.faces.ravel(), angles.ravel(), self.n_vertices)
        )

    def gauss_bonnet_residual(self) -> float:
        """``sum(defects) - 2 pi chi``."""
        return float(np.sum(self.angle_defects) - 2 * math.pi * self.topology.euler_characteristic)

    @property
    def face_eta(self) -> np.ndarray:
        return self.eta[self.faces].mean(axis=1)

    @property
    def face_weight(self) -> np.ndarray:
        """Weighted face measure ``e^{-eta_T} A_T``."""
        return np.exp(-self.face_eta) * self.face_areas

    @property
    def mass(self) -> np.ndarray:
        return self._cached("mass", lambda: np.exp(-self.eta) * self.vertex_areas)

    def integrate(self, f) -> float:
        return float(np.sum(np.asarray(f) * self.mass))

    def integrate_riemannian(self, f) -> float:
        return float(np.sum(np.asarray(f) * self.vertex_areas))

    def overlap(self, u, v) -> float:
        return float(np.sum(np.asarray(u) * np.asarray(v) * self.mass))

    # --- curvature -----------------------------------------------------------
    @property
    def scalar_curvature(self) -> np.ndarray:
        return self._cached("R", lambda: 2 * self.angle_defects / self.vertex_areas)

    def mean_curvature(self) -> float:
        R = self.scalar_curvature
        if self.average == "weighted":
            return self.integrate(R) / float(np.sum(self.mass))
        return self.integrate_riemannian(R) / float(np.sum(self.vertex_areas))

    def curvature(self) -> CurvatureBundle:
        R = self.scalar_curvature
        return CurvatureBundle(R, R / 2, R * R / 2, self.mean_curvature(), 2)

    # --- operators -------------------------------------------------------------
    def _stiffness(self, face_weights) -> sp.csr_matrix:
        cot = self._geometry()[3]
        F = self.faces
        rows, cols, vals = [], [], []
        for i in range(3):
            j, k = F[:, (i + 1) % 3], F[:, (i + 2) % 3]
            wij = 0.5 * cot[:, i] * face_weights
            rows += [j, k, j, k]
            cols += [k, j, j, k]
            vals += [-wij, -wij, wij, wij]
        n = self.n_vertices
        K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
        K.sum_duplicates()
        return K

    @property
    def stiffness(self) -> sp.csr_matrix:
        """Weighted cotan stiffness ``int <grad u, grad v> dm``."""
        return self._cached("K", lambda: self._stiffness(np.exp(-self.face_eta)))

    @property
    def stiffness0(self) -> sp.csr_matrix:
        """Unweighted cotan stiffness."""
        return self._cached("K0", lambda: self._stiffness(np.ones(len(self.faces))))

    def assemble_operator(self, c: float = 0.0) -> tuple:
        """``(A, mass)`` with ``A = K - c diag(R * mass)`` the weak form of ``-(L + cR)``."""
        A = self.stiffness - sp.diags(c * self.scalar_curvature * self.mass)
        return A.tocsr(), self.mass

    def laplacian(self, f) -> np.ndarray:
        """Plain Laplace-Beltrami ``-A^{-1} K0 f``."""
        return -(self.stiffness0 @ np.asarray(f, dtype=float)) / self.vertex_areas

    def witten(self, f) -> np.ndarray:
        return -(self.stiffness @ np.asarray(f, dtype=float)) / self.mass

    apply_L = witten

    def op_L(self, f, c: float) -> np.ndarray:
        return self.witten(f) + c * self.scalar_curvature * np.asarray(f, dtype=float)

    def hessian_R_trace(self) -> np.ndarray:
        return self.laplacian(self.scalar_curvature)

    def eigensolve(self, c: float, m: int) -> list[EigenPair]:
        """Lowest ``m`` eigenpairs of ``A u = lambda M u``, weighted-normalized."""
        if not 1 <= m <= MAX_EIGENPAIRS:
            raise ValueError(f"eigenpair count must be in [1, {MAX_EIGENPAIRS}]")
        A, mass = self.assemble_operator(c)
        assert np.all(mass > 0), "mass must be positive"
        n = self.n_vertices
        if n <= DENSE_LIMIT:
            vals, vecs = scipy.linalg.eigh(A.toarray(), np.diag(mass), subset_by_index=(0, m - 1))
        else:
            sigma = float(np.min(-c * self.scalar_curvature)) - 1.0
            v0 = np.random.default_rng(12345).standard_normal(n)
            try:
                vals, vecs = eigsh(A.tocsc(), k=m, M=sp.diags(mass).tocsc(), sigma=sigma, which="LM", v0=v0, tol=1e-12)
            except Exception as exc:
                raise MeshSolverError(f"eigensolver failed on {n} vertices: {exc}") from exc
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        pairs = []
        for j in range(len(vals)):
            u = vecs[:, j] / math.sqrt(float(np.sum(vecs[:, j] ** 2 * mass)))
            pivot = np.flatnonzero(np.abs(u) > 1e-8 * np.max(np.abs(u)))[0]
            pairs.append(EigenPair(float(vals[j]), u if u[pivot] > 0 else -u))
        return pairs

    # --- flow ---------------------------------------------------------------------
    @property
    def variable(self) -> np.ndarray:
        return self.w

    def evolve(self, delta) -> "MeshState":
        return self.with_fields(w=self.w + delta)

    def flow_velocity(self, params: FlowParams) -> np.ndarray:
        """``dw/dt = phi (R - r) / 2``."""
        if params.n != 2:
            # a flat surface is a cross-section of a flat product, which every flow fixes
            if np.max(np.abs(self.scalar_curvature)) > 1e-12:
                raise ValueError("the mesh backend is two-dimensional; higher n needs a flat surface")
            return np.zeros_like(self.w)
        r = params.r_value(self.mean_curvature())
        return params.phi * (self.scalar_curvature - r) / 2

    def cfl_limit(self, params: FlowParams, safety: float = 0.1) -> float:
        R = self.scalar_curvature
        r = params.r_value(self.mean_curvature())
        reaction = safety / (float(np.max(np.abs(params.phi * (R - r)))) + 1e-300)
        # Gershgorin bound on the spectrum of A^{-1} K0 (the linearized curvature operator)
        rate = float(np.max(2 * self.stiffness0.diagonal() / self.vertex_areas))
        diffusion = 2.5 / (abs(params.phi) * rate + 1e-300)
        return min(reaction, diffusion)

    # --- eigenfunction integrals ----------------------------------------------------
    def face_inner(self, a, b) -> np.ndarray:
        """Per-face ``<grad a, grad b>`` of the piecewise-linear interpolants."""
        cot = self._geometry()[3]
        F = self.faces
        acc = 0.0
        for i in range(3):
            j, k = F[:, (i + 1) % 3], F[:, (i + 2) % 3]
            acc = acc + cot[:, i] * (a[j] - a[k]) * (b[j] - b[k])
        return acc / (2 * self.face_areas)

    def face_mean(self, f) -> np.ndarray:
        return np.asarray(f)[self.faces].mean(axis=1)

    def integrate_faces(self, f) -> float:
        return float(np.sum(np.asarray(f) * self.face_weight))

    def integral_terms(self, pair: EigenPair, c: float) -> IntegralTerms:
        u = np.asarray(pair.vector, dtype=float)
        R, eta = self.scalar_curvature, self.eta
        RT = self.face_mean(R)
        gu = self.face_inner(u, u)
        ge = self.face_inner(eta, eta)
        eu = self.face_inner(eta, u)
        u2 = u * u
        drift = gu - 2 * self.face_mean(u) * eu + self.face_mean(u2) * ge
        If, Iv = self.integrate_faces, self.integrate
        return IntegralTerms(
            u2=Iv(u2),
            grad2=If(gu),
            u2_R=Iv(u2 * R),
            R_grad2=If(RT * gu),
            ric_grad=If(RT / 2 * gu),
            ric2_u2=Iv(R * R / 2 * u2),
            R2_u2=Iv(R * R * u2),
            u2_lapR=Iv(u2 * self.laplacian(R)),
            R_u2_lapeta=Iv(R * u2 * self.laplacian(eta)),
            R_drift_grad=If(RT * drift),
            eta_grad_u_sq=If(eu**2),
            hess_eta_uu=self.hessian_form_integral(eta, u),
            eta_grad_u2=If(self.face_inner(eta, u2)),
            approximate_hessian=True,
        )

    def fvl_terms(self, pair: EigenPair, chi, r_dot, c: float) -> FVLTerms:
        u = np.asarray(pair.vector, dtype=float)
        chi = np.broadcast_to(np.asarray(chi, dtype=float), u.shape)
        h = 2 * chi
        return FVLTerms(
            self.integrate(h / 4 * self.witten(u * u)),
            self.integrate_faces(self.face_mean(chi) * self.face_inner(u, u)),
            self.integrate(np.asarray(r_dot) * u * u),
        )

    def hessian_norm_integral(self, pair: EigenPair, c: float) -> float:
        H = self.vertex_fit(np.asarray(pair.vector, dtype=float))[1]
        return self.integrate(np.einsum("nij,nij->n", H, H))

    def vertex_fit(self, f) -> tuple:
        """Gradient and Hessian per vertex from a quadratic fit over the one-ring.

        The ring is unfolded into the plane by its polar map: neighbours sit at
        their edge length, with corner angles rescaled to sum to ``2 pi``.
        Frames are arbitrary per vertex, so only invariant contractions of the
        results are meaningful. Accuracy is low on irregular rings.
        """
        f = np.asarray(f, dtype=float)
        L, _, angles, _ = self._geometry()
        F = self.faces
        grads = np.zeros((self.n_vertices, 2))
        hess = np.zeros((self.n_vertices, 2, 2))
        for v, ring in enumerate(self.topology.rings):
            theta = np.array([angles[fi, ci] for fi, ci in ring])
            phase = np.concatenate([[0.0], np.cumsum(theta)[:-1]]) * (2 * math.pi / theta.sum())
            # neighbour at corner ci+1 of each fan face; its edge to v is opposite corner ci+2
            nbr = np.array([F[fi, (ci + 1) % 3] for fi, ci in ring])
            dist = np.array([L[fi, (ci + 2) % 3] for fi, ci in ring])
            x, y = dist * np.cos(phase), dist * np.sin(phase)
            design = np.stack([x, y, 0.5 * x * x, x * y, 0.5 * y * y], axis=1)
            coef = np.linalg.lstsq(design, f[nbr] - f[v], rcond=None)[0]
            grads[v] = coef[:2]
            hess[v] = [[coef[2], coef[3]], [coef[3], coef[4]]]
        return grads, hess

    def hessian_form_integral(self, eta, u) -> float:
        """Approximate ``int Hess(eta)(grad u, grad u) dm`` from vertex fits."""
        if not np.any(eta != eta[0]):
            return 0.0
        _, He = self.vertex_fit(eta)
        gu, _ = self.vertex_fit(u)
        return self.integrate(np.einsum("ni,nij,nj->n", gu, He, gu))

    # --- serialization -------------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices": self.vertices.tolist(),
                "faces": self.faces.tolist(),
                "base_lengths": self.base_lengths.tolist(),
                "w": self.w.tolist(),
                "eta": self.eta.tolist(),
                "average": self.average,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MeshState":
        data = json.loads(text)
        unknown = set(data) - {"vertices", "faces", "base_lengths", "w", "eta", "average"}
        if unknown:
            raise ValueError(f"unknown keys in mesh snapshot: {sorted(unknown)}")
        return cls.from_arrays(
            np.array(data["vertices"]),
            np.array(data["faces"]),
            np.array(data["base_lengths"]),
            w=np.array(data["w"]),
            eta=np.array(data["eta"]),
            average=data.get("average", "weighted"),
        )
