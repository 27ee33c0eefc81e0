"""Monotonicity hypotheses, maximum-principle checks and eigenfunction bounds.

Every predicate is reported as a numeric margin that is non-negative exactly
when the hypothesis holds; a predicate passes when its margin is at least
``-tol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..params import FlowParams, in_flow_F, in_flow_G, step1_margin
from ..types import EigenPair
from .formulas import NotApplicable, mono_tensor_trace

DEFAULT_TOL = 1e-10


@dataclass
class Predicate:
    margin: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"margin": self.margin, "passed": self.passed, "note": self.note}


@dataclass
class HypothesisReport:
    theorem: str
    A: float | None = None
    predicates: dict = field(default_factory=dict)
    observed_nondecreasing: bool | None = None
    observed_margin: float | None = None
    notes: list = field(default_factory=list)

    def add(self, name: str, margin: float, tol: float, note: str = "", strict: bool = False) -> Predicate:
        margin = float(margin)
        ok = margin > 0 if strict else margin >= -tol
        self.predicates[name] = Predicate(margin, bool(ok), note)
        return self.predicates[name]

    @property
    def hypotheses_pass(self) -> bool:
        return all(p.passed for p in self.predicates.values())

    @property
    def consistent(self) -> bool:
        """False only when every hypothesis holds yet the conclusion is observed to fail."""
        return not (self.hypotheses_pass and self.observed_nondecreasing is False)

    def exit_code(self) -> int:
        if not self.consistent:
            return 3
        return 0 if self.hypotheses_pass else 2

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "A": self.A,
            "predicates": {k: v.to_dict() for k, v in self.predicates.items()},
            "hypotheses_pass": self.hypotheses_pass,
            "observed_nondecreasing": self.observed_nondecreasing,
            "observed_margin": self.observed_margin,
            "notes": list(self.notes),
        }


def _min(x) -> float:
    return float(np.min(np.asarray(x, dtype=float)))


def _branch_monotonicity(traj, ks=None) -> tuple:
    """Smallest relative increment of any cluster-mean branch between consecutive slices."""
    m = len(traj.slices[0].pairs)
    if m == 0 or len(traj.slices) < 2:
        return None, None
    worst = np.inf
    for r in traj.slices[0].clusters:
        if ks is not None and r.start not in ks:
            continue
        y = traj.branch(r.start, 0)
        scale = max(1.0, float(np.max(np.abs(y))))
        worst = min(worst, float(np.min(np.diff(y))) / scale)
    return worst, worst >= -1e-9


def minimal_A(traj, params: FlowParams, theorem: str = "T2") -> float:
    """Smallest non-negative constant satisfying the tensor lower bound on every slice."""
    worst = 0.0
    for s in traj.slices:
        R = np.asarray(s.curvature.scalar)
        ric = np.asarray(s.curvature.ric_coefficient)
        if theorem == "T2":
            form = params.a * ric + (params.phi - 2 * params.rho) / 2 * R
        elif theorem == "monn":
            form = ((params.phi - 2 * params.rho) - params.c * params.psi) * R + 2 * params.a * ric
        else:
            raise ValueError(f"unknown theorem {theorem!r}")
        worst = max(worst, -_min(form))
    return worst


def _effective_dimension(traj, params: FlowParams, report: HypothesisReport) -> None:
    if params.n > 2 and getattr(traj.slices[0].state, "n", params.n) == 2:
        flat = all(np.max(np.abs(s.curvature.scalar)) <= 1e-12 for s in traj.slices)
        if not flat:
            raise NotApplicable("a two-dimensional run stands in for a higher-dimensional flat product only when R = 0")
        report.notes.append(f"flat surface treated as a cross-section of a flat product of dimension {params.n}")


def check_T2(traj, params: FlowParams, A: float, tol: float = DEFAULT_TOL) -> HypothesisReport:
    """Hypotheses of the drift-free monotonicity theorem on flow F, and the observed branches."""
    if params.c != 0 or traj.c != 0:
        raise NotApplicable("this monotonicity theorem concerns -L, so c must be 0")
    if params.n <= 2:
        raise NotApplicable("this monotonicity theorem needs n > 2")
    if A < 0:
        raise ValueError("A must be non-negative")
    rep = HypothesisReport("T2", A)
    _effective_dimension(traj, params, rep)
    rep.add("flow_F", min(params.a, params.rho_bound - params.rho), tol, "a >= 0 and rho <= a/(2(n-1))")
    if not in_flow_F(params):
        rep.predicates["flow_F"].passed = False
    a11 = np.inf
    trace = np.inf
    for s in traj.slices:
        R = np.asarray(s.curvature.scalar)
        ric = np.asarray(s.curvature.ric_coefficient)
        a11 = min(a11, _min(params.a * ric + (params.phi - 2 * params.rho) / 2 * R + A))
        trace = min(trace, _min(mono_tensor_trace(s.state, params)))
    rep.add("A11", a11, tol, "smallest eigenvalue of a Ric + ((phi - 2 rho)/2) R g + A g over all slices")
    s0 = traj.slices[0]
    r0 = params.r_value(s0.curvature.mean)
    if params.phi != 0:
        threshold = 2 * (-A / params.phi + r0 / params.n)
    else:
        threshold = 2 * r0 / params.n if A == 0 else np.inf
    rep.add("A12", _min(s0.curvature.scalar) - threshold, tol, "R >= 2(-A/phi + r/n) at t = 0")
    rep.add("T_trace", trace, tol, "pointwise trace of the monotonicity tensor over all slices")
    rep.observed_margin, rep.observed_nondecreasing = _branch_monotonicity(traj)
    return rep


def check_monn(traj, params: FlowParams, A: float, tol: float = DEFAULT_TOL) -> HypothesisReport:
    """Hypotheses of the drifted monotonicity theorem on flow G, and the observed branches.

    Parameters outside flow G are reported as a failed membership predicate
    and no further predicate is evaluated.
    """
    if A < 0:
        raise ValueError("A must be non-negative")
    rep = HypothesisReport("monn", A)
    margin = min(params.c + 0.25, -params.c, params.a, params.rho_bound - params.rho)
    note = "r off, -1/4 < c < 0, a >= 0, rho < a/(2(n-1))"
    if params.use_average_term:
        note += "; average term is active"
    member = rep.add("flow_G", margin, tol, note)
    member.passed = in_flow_G(params) and params.n > 2
    if not member.passed:
        if params.n <= 2:
            member.note += "; needs n > 2"
        return rep
    _effective_dimension(traj, params, rep)
    k = step1_margin(params)
    lap_eta, tensor, lower = np.inf, np.inf, np.inf
    for s in traj.slices:
        R = np.asarray(s.curvature.scalar)
        ric = np.asarray(s.curvature.ric_coefficient)
        st = s.state
        eta = getattr(st, "eta", None)
        lap = st.laplacian(eta) if eta is not None else np.zeros_like(R)
        lap_eta = min(lap_eta, _min((params.phi - 2 * params.rho) / params.psi * R - lap))
        tensor = min(tensor, _min(((params.phi - 2 * params.rho) - params.c * params.psi) * R + 2 * params.a * ric + A))
        lower = min(lower, _min(R - A / k))
    rep.add("laplacian_eta", lap_eta, tol, "Delta eta <= ((phi - 2 rho)/psi) R over all slices")
    rep.add("tensor_bound", tensor, tol, "[(phi - 2 rho) - c psi] R g + 2a Ric >= -A g over all slices")
    rep.add("R_lower_bound", lower, tol, "R >= A/(2 c psi - phi) over all slices")
    rep.notes.append(
        "with R >= 0 the drift bound forces Delta eta <= 0 everywhere, which on a closed manifold "
        "means Delta eta = 0; only constant drifts can satisfy it"
    )
    rep.observed_margin, rep.observed_nondecreasing = _branch_monotonicity(traj)
    return rep


def check_max_principle(traj, params: FlowParams, K: float, tol: float = 1e-6, hyp_tol: float = DEFAULT_TOL) -> HypothesisReport:
    """Scalar-curvature lower bound preserved along the run."""
    rep = HypothesisReport("max_principle")
    rep.add("a_nonnegative", params.a, 0.0, "a >= 0")
    rep.add("T_trace", min(_min(mono_tensor_trace(s.state, params)) for s in traj.slices), hyp_tol)
    rep.add("initial_bound", _min(traj.slices[0].curvature.scalar) - K, hyp_tol, "min R(0) >= K")
    observed = min(_min(s.curvature.scalar) for s in traj.slices) - K
    rep.observed_margin = observed
    rep.observed_nondecreasing = observed >= -tol
    if not rep.hypotheses_pass:
        rep.notes.append("hypotheses unmet: " + ", ".join(k for k, p in rep.predicates.items() if not p.passed))
    return rep


def check_inthess(state, pair: EigenPair, params: FlowParams, lambda_dot: float, terms=None) -> float:
    """Absolute defect of the integrated Hessian-norm identity on a constant-curvature state.

    The identity substitutes the constant-curvature velocity formula with
    ``r = R``, so ``lambda_dot`` must come from a flow with the average term
    active (or any flow whose velocity has no ``(r - R)`` contribution).
    """
    if params.a == 0:
        raise NotApplicable("the Hessian identity divides by a")
    bundle = state.curvature()
    if not bundle.is_constant():
        raise NotApplicable(f"scalar curvature is not constant (spread {bundle.spread:.3e})")
    t = state.integral_terms(pair, params.c) if terms is None else terms
    lam, c, n = pair.value, params.c, params.n
    R = float(np.mean(bundle.scalar))
    predicted = (
        -lambda_dot / (2 * params.a)
        + lam * lam
        + (lam * R / n) * (2 * n * c - 1)
        + c * c * R * R
        - c * t.ric2_u2
        - t.hess_eta_uu
    )
    return abs(state.hessian_norm_integral(pair, c) - predicted)


def upper_bound(state, pair: EigenPair, params: FlowParams, terms=None) -> float:
    """Upper bound for ``d lambda / dt`` on constant-curvature states (same ``r = R`` caveat)."""
    if params.a <= 0:
        raise NotApplicable("the bound needs a > 0")
    bundle = state.curvature()
    if not bundle.is_constant():
        raise NotApplicable(f"scalar curvature is not constant (spread {bundle.spread:.3e})")
    t = state.integral_terms(pair, params.c) if terms is None else terms
    a, c, n, lam = params.a, params.c, params.n, pair.value
    R = float(np.mean(bundle.scalar))
    return (
        2 * a * ((n - 1) / n) * lam * lam
        + (2 * a * R / n) * (2 * n * c - 2 * c - 1) * lam
        + 2 * a * ((n - 1) / n) * c * c * R * R
        - 2 * a * c * t.ric2_u2
        - (2 * a / n) * t.eta_grad_u_sq
        - 2 * a * t.hess_eta_uu
        + (2 * a * (lam + c * R) / n) * t.eta_grad_u2
    )


def check_upper_bound(state, pair: EigenPair, params: FlowParams, lambda_dot: float, terms=None) -> float:
    """``bound - lambda_dot``; non-negative when the bound holds."""
    return upper_bound(state, pair, params, terms) - lambda_dot


def check_step_inequalities(state, pair: EigenPair, params: FlowParams, A: float, terms=None) -> dict:
    """Margins of the six intermediate inequalities of the drifted monotonicity argument."""
    t = state.integral_terms(pair, params.c) if terms is None else terms
    a, c, rho = params.a, params.c, params.rho
    phi, psi = params.phi, params.psi
    k = 2 * c * psi - phi
    return {
        "STEP1": k,
        "V": k * t.u2_R - A * t.u2,
        "W": -c * psi * t.R_drift_grad,
        "X": -2 * a * c * t.ric2_u2,
        "Y": -(c * psi - (phi - 2 * rho)) * t.R_grad2 + 2 * a * t.ric_grad + pair.value * A,
        "AA": c * psi * t.R_u2_lapeta + c * (2 * c * psi - (phi - 2 * rho)) * t.R2_u2,
    }
