"""Flow parameters, derived coefficients and flow classification."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field


class FlowClass(enum.Enum):
    RICCI_BOURGUIGNON = "RicciBourguignon"
    NORMALIZED_RICCI = "NormalizedRicci"
    UNNORMALIZED_RICCI = "UnnormalizedRicci"
    NORMALIZED_YAMABE = "NormalizedYamabe"
    GENERAL = "GeneralFlow"


class OutsideMonotoneRegime(UserWarning):
    """Parameters lie outside both monotone flow families."""


def derive_coefficients(a: float, rho: float, n: int) -> tuple[float, float]:
    """Return ``(phi, psi) = (-a + n*rho, a - 2(n-1)*rho)``."""
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n!r}")
    return -a + n * rho, a - 2 * (n - 1) * rho


@dataclass(frozen=True)
class FlowParams:
    """Constants of the unified flow and of the operator ``L + cR``.

    Parameters
    ----------
    a : float
        Ricci coefficient.
    rho : float
        Scalar-curvature coefficient.
    c : float
        Potential coupling of the operator.
    n : int
        Manifold dimension.
    use_average_term : bool
        Whether the average-curvature term ``r`` is active in the flow.
    """

    a: float
    rho: float
    c: float = 0.0
    n: int = 2
    use_average_term: bool = False
    phi: float = field(init=False)
    psi: float = field(init=False)

    def __post_init__(self):
        phi, psi = derive_coefficients(self.a, self.rho, self.n)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def rho_bound(self) -> float:
        return self.a / (2 * (self.n - 1))

    def r_value(self, mean_curvature: float) -> float:
        """Average curvature seen by the flow: ``r`` when active, else 0."""
        return float(mean_curvature) if self.use_average_term else 0.0

    def warn_if_unmonotone(self) -> None:
        if not (in_flow_F(self) or in_flow_G(self)):
            warnings.warn(
                f"a={self.a}, rho={self.rho}, c={self.c} is outside both "
                "monotone flow families; no monotonicity is expected",
                OutsideMonotoneRegime,
                stacklevel=2,
            )

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "rho": self.rho,
            "c": self.c,
            "n": self.n,
            "use_average_term": self.use_average_term,
        }


def classify_flow(params: FlowParams) -> FlowClass:
    a, rho, on = params.a, params.rho, params.use_average_term
    if a == 1 and not on and rho != 0:
        return FlowClass.RICCI_BOURGUIGNON
    if a == 1 and rho == 0:
        return FlowClass.NORMALIZED_RICCI if on else FlowClass.UNNORMALIZED_RICCI
    if a == 0 and rho == -0.5 and on:
        return FlowClass.NORMALIZED_YAMABE
    return FlowClass.GENERAL


def in_flow_F(params: FlowParams) -> bool:
    return params.a >= 0 and params.rho <= params.rho_bound


def in_flow_G(params: FlowParams) -> bool:
    # strict rho bound here, non-strict in in_flow_F; both as stated for the two families
    return (
        not params.use_average_term
        and -0.25 < params.c < 0
        and params.a >= 0
        and params.rho < params.rho_bound
    )


def step1_margin(params: FlowParams) -> float:
    """``2*c*psi - phi``; positive throughout the flow-G family when n > 2."""
    return 2 * params.c * params.psi - params.phi
