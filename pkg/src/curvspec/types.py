"""Records shared by every geometry backend."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np


class CurvspecError(Exception):
    """Base class for library errors."""


class ResolutionError(CurvspecError):
    """A field is not resolved by the grid it lives on."""


class TriangleInequalityError(CurvspecError):
    def __init__(self, face: int, lengths):
        self.face = face
        self.lengths = tuple(float(x) for x in lengths)
        super().__init__(f"triangle inequality violated on face {face}: lengths {self.lengths}")


class MeshError(CurvspecError):
    """Malformed mesh input."""


class NumericalAbort(CurvspecError):
    """The flow left the region where it can be integrated."""


@dataclass(frozen=True)
class CurvatureBundle:
    """Curvature data at one time slice.

    Every backend in the package has ``Ric = ric_coefficient * g`` (Einstein
    models and two-dimensional metrics), so Ricci data is carried as that
    coefficient field.
    """

    scalar: np.ndarray
    ric_coefficient: np.ndarray
    ric_norm_sq: np.ndarray
    mean: float
    n: int

    @property
    def spread(self) -> float:
        return float(np.max(self.scalar) - np.min(self.scalar))

    def is_constant(self, rtol: float = 1e-8) -> bool:
        scale = max(abs(float(np.mean(self.scalar))), 1.0)
        return self.spread <= rtol * scale


@dataclass
class EigenPair:
    """Eigenvalue of ``-(L + cR)`` and its eigenfunction.

    ``vector`` is ``None`` on the analytic backend, where eigenfunctions are
    never sampled. ``degree`` and ``multiplicity`` are only meaningful there.
    """

    value: float
    vector: Optional[np.ndarray] = None
    multiplicity: int = 1
    degree: Optional[int] = None


@dataclass(frozen=True)
class IntegralTerms:
    """Weighted integrals of one normalized eigenfunction ``u``."""

    u2: float = 1.0
    grad2: float = 0.0
    u2_R: float = 0.0
    R_grad2: float = 0.0
    ric_grad: float = 0.0
    ric2_u2: float = 0.0
    R2_u2: float = 0.0
    u2_lapR: float = 0.0
    R_u2_lapeta: float = 0.0
    R_drift_grad: float = 0.0
    eta_grad_u_sq: float = 0.0
    hess_eta_uu: float = 0.0
    eta_grad_u2: float = 0.0
    approximate_hessian: bool = False

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FVLTerms:
    """The three integrals of the compact evolution formula for a variation ``H = chi*g``."""

    h_quarter_Lu2: float
    H_grad: float
    Rdot_u2: float


def cluster_ranges(values, rtol: float = 1e-6) -> list[range]:
    """Group sorted eigenvalues that agree to relative ``rtol``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    groups = []
    start = 0
    for i in range(1, values.size):
        ref = max(abs(values[i]), abs(values[i - 1]), 1.0)
        if abs(values[i] - values[i - 1]) > rtol * ref:
            groups.append(range(start, i))
            start = i
    groups.append(range(start, values.size))
    return groups
