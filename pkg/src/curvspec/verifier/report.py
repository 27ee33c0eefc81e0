"""Evolution reports: finite-difference eigenvalue velocities against every formula."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..engine import Trajectory, curvature_dot, lambda_dot_fd
from .formulas import (
    NotApplicable,
    rhs_appendix_rewrite,
    rhs_constant_R,
    rhs_fvl,
    rhs_fvrby,
    rhs_surface,
    scalar_curvature_rhs,
    variation_coefficient,
)

TIER_TOL = {"strict": 1e-6, "mesh": 0.02}
AAW_TOL = {"strict": 1e-4, "mesh": 0.05}
MEASURE_TOL = 1e-4
GAUSS_BONNET_TOL = 1e-9


@dataclass
class EvolutionRow:
    t: float
    k: int
    cluster_size: int
    lam: float
    lambda_dot_fd: float
    fd_error_bar: float
    rhs_fvl: float
    rhs_fvrby: float
    rhs_corollary: float
    corollary: str
    rhs_appendix_rewrite: float
    residual_fvl: float
    residual_fvrby: float
    relative_fvl: float
    relative_fvrby: float
    relative_rewrite: float
    passed: bool


@dataclass
class SliceCheck:
    t: float
    aaw_relative: float
    measure_relative: float
    gauss_bonnet: float
    passed: bool


@dataclass
class EvolutionReport:
    tier: str
    tolerance: float
    rows: list = field(default_factory=list)
    slices: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(s.passed for s in self.slices)

    def exit_code(self) -> int:
        return 0 if self.passed else 3

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(EvolutionRow.__dataclass_fields__)
        writer.writerow(names)
        for row in self.rows:
            writer.writerow([_fmt(getattr(row, n)) for n in names])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "tier": self.tier,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "rows": [asdict(r) for r in self.rows],
            "slice_checks": [asdict(s) for s in self.slices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def _fmt(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, float):
        return repr(x)
    return x


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(1.0, abs(scale))


def _norm(state, f) -> float:
    f = np.asarray(f, dtype=float)
    if hasattr(state, "integrate"):
        return math.sqrt(max(state.integrate(f * f), 0.0))
    return float(np.max(np.abs(f)))


def _total_mass(state) -> float:
    if hasattr(state, "mass"):
        return float(np.sum(state.mass))
    return math.nan


SLICE_CHECKS = ("aaw", "measure", "gauss_bonnet")


def slice_check(traj: Trajectory, i: int, tier: str = "strict", checks=SLICE_CHECKS) -> SliceCheck:
    """Curvature evolution, measure evolution and Gauss-Bonnet at an interior slice.

    All three are always computed; ``checks`` selects which enter the verdict.
    """
    unknown = set(checks) - set(SLICE_CHECKS)
    if unknown:
        raise ValueError(f"unknown slice checks {sorted(unknown)}")
    s = traj.slices[i]
    params = traj.params
    fd = curvature_dot(traj, i)
    rhs = scalar_curvature_rhs(s.state, params)
    denom = max(_norm(s.state, rhs), _norm(s.state, fd), 1e-300)
    aaw = _norm(s.state, fd - rhs) / denom
    if np.all(fd == 0) and np.all(rhs == 0):
        aaw = 0.0
    measure = math.nan
    if hasattr(s.state, "mass"):
        _, h = variation_coefficient(s.state, params)
        predicted = 0.5 * s.state.integrate(h)
        fd_mass = (_total_mass(traj.slices[i + 1].state) - _total_mass(traj.slices[i - 1].state)) / (2 * traj.dt)
        # scaled by the L1 size of the integrand, since int h dm can vanish (tori)
        scale = max(0.5 * s.state.integrate(np.abs(h)), abs(fd_mass))
        measure = abs(fd_mass - predicted) / scale if scale > 0 else 0.0
    gb = s.state.gauss_bonnet_residual() if hasattr(s.state, "gauss_bonnet_residual") else 0.0
    verdicts = {
        "aaw": aaw <= AAW_TOL[tier],
        "measure": math.isnan(measure) or measure <= MEASURE_TOL,
        "gauss_bonnet": abs(gb) <= GAUSS_BONNET_TOL,
    }
    ok = all(verdicts[c] for c in checks)
    return SliceCheck(s.t, float(aaw), float(measure), float(gb), bool(ok))


def evolution_report(
    traj: Trajectory,
    tier: str = "strict",
    ks=None,
    stride: int = 1,
    tolerance: float | None = None,
    checks=SLICE_CHECKS,
) -> EvolutionReport:
    """Compare finite-difference eigenvalue velocities with every applicable formula.

    Rows are produced for interior slices ``1, 1 + stride, ...`` and for the
    first member of each eigenvalue cluster (optionally restricted to
    ``ks``); formula values inside a cluster are cluster means.
    """
    if tier not in TIER_TOL:
        raise ValueError(f"unknown tier {tier!r}")
    tol = TIER_TOL[tier] if tolerance is None else tolerance
    report = EvolutionReport(tier, tol)
    params = traj.params
    n_slices = len(traj.slices)
    for i in range(1, n_slices - 1, stride):
        s = traj.slices[i]
        report.slices.append(slice_check(traj, i, tier, checks))
        chi, _ = variation_coefficient(s.state, params)
        R_dot = curvature_dot(traj, i)
        for r in s.clusters:
            if ks is not None and r.start not in ks:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fd = lambda_dot_fd(traj, r.start, index=i)
            vals = {"fvl": [], "fvrby": [], "cor": [], "rw": []}
            corollary = ""
            for k in r:
                pair = s.pairs[k]
                terms = s.state.integral_terms(pair, traj.c)
                vals["fvl"].append(rhs_fvl(s.state, pair, chi, R_dot, traj.c))
                vals["fvrby"].append(rhs_fvrby(s.state, pair, params, terms))
                vals["rw"].append(rhs_appendix_rewrite(s.state, pair, params, terms))
                try:
                    if params.n == 2:
                        vals["cor"].append(rhs_surface(s.state, pair, params, terms))
                        corollary = "surface"
                    else:
                        vals["cor"].append(rhs_constant_R(s.state, pair, params, terms))
                        corollary = "constant_R"
                except NotApplicable:
                    pass
            mean = {k: float(np.mean(v)) if v else math.nan for k, v in vals.items()}
            lam = float(np.mean(s.values[r.start : r.stop]))
            res_fvl = abs(fd.value - mean["fvl"])
            res_fvrby = abs(fd.value - mean["fvrby"])
            bound = max(fd.error_bar, tol * max(1.0, abs(fd.value)))
            rel_rw = _rel(mean["rw"], mean["fvrby"], mean["fvrby"])
            ok = res_fvl <= bound and res_fvrby <= bound and rel_rw <= tol
            if corollary:
                ok = ok and _rel(mean["cor"], mean["fvrby"], mean["fvrby"]) <= tol
            report.rows.append(
                EvolutionRow(
                    t=s.t,
                    k=r.start,
                    cluster_size=len(r),
                    lam=lam,
                    lambda_dot_fd=fd.value,
                    fd_error_bar=fd.error_bar,
                    rhs_fvl=mean["fvl"],
                    rhs_fvrby=mean["fvrby"],
                    rhs_corollary=mean["cor"],
                    corollary=corollary,
                    rhs_appendix_rewrite=mean["rw"],
                    residual_fvl=res_fvl,
                    residual_fvrby=res_fvrby,
                    relative_fvl=res_fvl / max(1.0, abs(fd.value)),
                    relative_fvrby=res_fvrby / max(1.0, abs(fd.value)),
                    relative_rewrite=rel_rw,
                    passed=bool(ok),
                )
            )
    return report
