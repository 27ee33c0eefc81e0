"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test prints and records a single ``criterion N: PASS|FAIL`` line.
"""

import csv
import io
import math
import time
import warnings

import numpy as np
import pytest
import scipy.linalg
from scipy.special import iv

from conftest import ACCEPTANCE_LINES
from curvspec.analytic import SphereState
from curvspec.cli import shipped_scenarios
from curvspec.commands import _trajectory, run_command
from curvspec.config import build_state, flow_params, load_config
from curvspec.engine import run
from curvspec.grid import GridState
from curvspec.mesh import MeshState
from curvspec.params import FlowParams, step1_margin
from curvspec.verifier import (
    check_inthess,
    check_T2,
    check_upper_bound,
    evolution_report,
    fvl_on_path,
    mono_tensor_trace,
    rhs_appendix_rewrite,
    rhs_constant_R,
    rhs_fvl,
    rhs_fvrby,
    rhs_surface,
)

SCENARIOS = {p.stem: p for p in shipped_scenarios()}


def scenario(name):
    return load_config(SCENARIOS[name])


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# 1 -----------------------------------------------------------------------------
def test_criterion_01_shrinking_sphere():
    t0 = time.perf_counter()
    cfg = scenario("sphere_shrinking")
    traj = _trajectory(cfg)
    t = traj.times
    lam_err = float(np.max(np.abs(traj.branch(1) / (3 / (1 - 4 * t)) - 1)))
    report = evolution_report(traj, "strict", ks=[1], stride=cfg["run"]["stride"], tolerance=1e-5)
    pair_err = 0.0
    for r in report.rows:
        vals = [r.lambda_dot_fd, r.rhs_fvl, r.rhs_fvrby, r.rhs_corollary]
        assert r.corollary == "constant_R"
        pair_err = max(pair_err, max(rel(a, b) for a in vals for b in vals))
    elapsed = time.perf_counter() - t0
    ok = lam_err <= 1e-8 and pair_err <= 1e-5 and len(report.rows) > 5 and elapsed < 1.0
    verdict(1, ok, f"lambda_1 rel err {lam_err:.1e}, pairwise rel {pair_err:.1e}, {elapsed:.2f}s")


# 2 -----------------------------------------------------------------------------
def test_criterion_02_einstein_fixed_point():
    t0 = time.perf_counter()
    worst_flow, worst_rhs = 0.0, 0.0
    for n in range(2, 6):
        bound = 1.0 / (2 * (n - 1))
        for a, rho in [(1.0, 0.0), (1.0, bound), (2.0, -0.3), (0.5, 0.1 * bound), (0.0, -0.5)]:
            p = FlowParams(a, rho, 0.0, n, use_average_term=True)
            s = SphereState(n, 1.7)
            worst_flow = max(worst_flow, abs(s.flow_velocity(p)))
            traj = run(s, p, 0.05, m=4)
            assert traj.aborted is None and len(traj.slices) > 1
            worst_flow = max(worst_flow, float(np.max(np.abs(np.diff(traj.eigenvalues(), axis=0)))))
            for pair in s.eigensolve(0.0, 4):
                chi = 2 * p.phi / n * (s.scalar_curvature - p.r_value(s.scalar_curvature))
                vals = [
                    rhs_fvrby(s, pair, p),
                    rhs_constant_R(s, pair, p),
                    rhs_appendix_rewrite(s, pair, p),
                    rhs_fvl(s, pair, chi, 0.0, 0.0),
                ]
                if n == 2:
                    vals.append(rhs_surface(s, pair, p))
                worst_rhs = max(worst_rhs, max(abs(v) for v in vals))
    elapsed = time.perf_counter() - t0
    ok = worst_flow == 0.0 and worst_rhs <= 1e-10 and elapsed < 1.0
    verdict(2, ok, f"max |flow| {worst_flow:.1e}, max |rhs| {worst_rhs:.1e}, {elapsed:.2f}s")


# 3 -----------------------------------------------------------------------------
def test_criterion_03_flat_torus_spectrum():
    t0 = time.perf_counter()
    result = run_command(scenario("flat_torus_spectrum"))
    vals = np.array(result.summary["eigenvalues"][:6])
    err = float(np.max(np.abs(vals - [0, 1, 1, 1, 1, 2])))
    elapsed = time.perf_counter() - t0
    verdict(3, err <= 1e-6 and elapsed < 5.0, f"max |lambda - Fourier| {err:.1e}, {elapsed:.2f}s")


# 4 -----------------------------------------------------------------------------
def fourier_galerkin_witten(amplitude, m, K=30, ky_max=6):
    """Independent oracle for -L with eta = amplitude*cos(x) on the flat 2pi-torus.

    In the basis exp(i(kx x + ky y)) the weak form separates in ky; the weight
    e^{-eta} has Fourier coefficients (-1)^j I_j(amplitude).
    """
    kx = np.arange(-K, K + 1)
    diff = kx[:, None] - kx[None, :]
    weight = (-1.0) ** np.abs(diff) * iv(np.abs(diff), amplitude)
    values = []
    for ky in range(-ky_max, ky_max + 1):
        A = (kx[:, None] * kx[None, :] + ky * ky) * weight
        values.extend(scipy.linalg.eigh(A, weight, eigvals_only=True))
    return np.sort(values)[:m]


def test_criterion_04_witten_spectrum_oracle():
    t0 = time.perf_counter()
    result = run_command(scenario("witten_spectrum"))
    vals = np.array(result.summary["eigenvalues"])
    oracle = fourier_galerkin_witten(0.3, 10)
    err = float(np.max(np.abs(vals - oracle) / np.maximum(np.abs(oracle), 1.0)))
    elapsed = time.perf_counter() - t0
    verdict(4, len(vals) == 10 and err <= 1e-6 and elapsed < 30.0, f"max rel err vs Galerkin {err:.1e}, {elapsed:.2f}s")


# 5 -----------------------------------------------------------------------------
def _verify_rows(result):
    return list(csv.DictReader(io.StringIO(result.files["verify_report.csv"])))


def test_criterion_05_identity_suite():
    t0 = time.perf_counter()
    cfg = scenario("identity_suite")
    result = run_command(cfg)
    rows = _verify_rows(result)
    checks = {r["check"] for r in rows}
    draws = {int(r["draw"]) for r in rows}
    worst = max(float(r["relative"]) for r in rows)
    elapsed = time.perf_counter() - t0
    ok = (
        checks == {"product-rule", "ibp", "cvx", "aav", "bochner", "reilly"}
        and len(draws) == 20
        and cfg["backend"]["resolution"] == [128, 128]
        and worst <= 1e-7
        and result.exit_code == 0
        and elapsed < 60.0
    )
    verdict(5, ok, f"max relative residual {worst:.1e} over {len(rows)} checks, {elapsed:.1f}s")


# 6 -----------------------------------------------------------------------------
def test_criterion_06_reilly_flat():
    t0 = time.perf_counter()
    cfg = scenario("reilly_flat")
    result = run_command(cfg)
    worst_cli = max(float(r["relative"]) for r in _verify_rows(result))
    # the flat specialization written out directly
    state = build_state(cfg)
    rng = np.random.default_rng(99)
    from curvspec.grid.spectral import random_band_limited

    worst_direct = 0.0
    for _ in range(10):
        f = random_band_limited(state.grid, rng, 4)
        Lf = state.witten(f)
        lhs = state.integrate(Lf * Lf)
        rhs = state.integrate(state.tensor_apply(state.hessian(state.eta), f, f) + state.tensor_norm_sq(state.hessian(f)))
        worst_direct = max(worst_direct, abs(lhs - rhs) / lhs)
    elapsed = time.perf_counter() - t0
    ok = worst_cli <= 1e-8 and worst_direct <= 1e-8 and elapsed < 10.0
    verdict(6, ok, f"checker {worst_cli:.1e}, direct {worst_direct:.1e}, {elapsed:.2f}s")


# 7 -----------------------------------------------------------------------------
def test_criterion_07_operator_variation():
    t0 = time.perf_counter()
    result = run_command(scenario("operator_variation"))
    rows = _verify_rows(result)
    lp = {r["item"]: r for r in rows if r["check"] == "lprime"}
    sup = float(lp["delta=0.001"]["absolute"])
    order = float(lp["observed order"]["relative"])
    a9 = next(r for r in rows if r["check"] == "a9")
    a9_rel = float(a9["relative"])
    elapsed = time.perf_counter() - t0
    ok = sup <= 1e-5 and order >= 1.8 and a9_rel <= 1e-6 and elapsed < 30.0
    verdict(7, ok, f"operator-variation sup residual {sup:.1e} (order {order:.2f}), eigenvalue variation vs FVL {a9_rel:.1e}, {elapsed:.2f}s")


# 8 -----------------------------------------------------------------------------
def test_criterion_08_curvature_evolution():
    t0 = time.perf_counter()
    cfg = scenario("conformal_torus_flow")
    traj = _trajectory(cfg)
    report = evolution_report(traj, "strict", stride=1, checks=("aaw",))
    aaw = max(s.aaw_relative for s in report.slices)
    bbf_rows = [r for r in _verify_rows(run_command(scenario("operator_variation"))) if r["check"] == "bbf"]
    bbf = float(next(r for r in bbf_rows if r["item"] == "delta=0.001")["relative"])
    elapsed = time.perf_counter() - t0
    p = traj.params
    ok = (
        cfg["backend"]["resolution"] == [64, 64]
        and (p.a, p.rho, p.use_average_term) == (1.0, 0.05, True)
        and aaw <= 1e-4
        and bbf <= 1e-4
        and elapsed < 60.0
    )
    verdict(8, ok, f"AAW L2-relative {aaw:.1e} over {len(report.slices)} slices, BBF relative {bbf:.1e}, {elapsed:.1f}s")


# 9 -----------------------------------------------------------------------------
def _algebra_states():
    for n in range(2, 6):
        for c in (0.0, -0.1, 0.2):
            for on in (False, True):
                yield "analytic", SphereState(n, 1.3), FlowParams(1.0, 0.05, c, n, on)
    grid = GridState.from_expressions((48, 48), "0.2*cos(x)*cos(y)", "0.3*cos(x)")
    rng = np.random.default_rng(9)
    from curvspec.grid.spectral import random_band_limited

    yield "grid", grid, FlowParams(1.0, 0.05, -0.1, 2, True)
    yield "grid", grid.with_fields(w=random_band_limited(grid.grid, rng, 3, 0.3)), FlowParams(0.7, -0.2, 0.15, 2)
    mesh = MeshState.icosphere(3)
    yield "mesh", mesh, FlowParams(1.0, 0.0, 0.0, 2)
    yield "mesh", mesh.with_fields(w=0.1 * mesh.vertices[:, 2], eta=0.2 * mesh.vertices[:, 0]), FlowParams(1.0, 0.1, -0.1, 2, True)


def test_criterion_09_formula_algebra():
    t0 = time.perf_counter()
    worst = {"analytic": 0.0, "grid": 0.0, "mesh": 0.0}
    for kind, state, p in _algebra_states():
        for pair in state.eigensolve(p.c, 4):
            terms = state.integral_terms(pair, p.c)
            ref = rhs_fvrby(state, pair, p, terms)
            others = [rhs_appendix_rewrite(state, pair, p, terms)]
            if p.n == 2:
                others.append(rhs_surface(state, pair, p, terms))
            for v in others:
                worst[kind] = max(worst[kind], abs(v - ref) / max(1.0, abs(ref)))
    elapsed = time.perf_counter() - t0
    ok = worst["analytic"] <= 1e-6 and worst["grid"] <= 1e-6 and worst["mesh"] <= 1e-2 and elapsed < 30.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(9, ok, f"max relative {detail}, {elapsed:.2f}s")


# 10 ----------------------------------------------------------------------------
def test_criterion_10_mesh_tier():
    t0 = time.perf_counter()
    errs = []
    for level in (3, 4, 5):
        pairs = MeshState.icosphere(level).eigensolve(0.0, 4)
        errs.append(abs(np.mean([p.value for p in pairs[1:4]]) - 2.0))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    cfg = scenario("mesh_icosphere_flow")
    assert cfg["backend"]["level"] == 4 and not cfg["flow"]["use_average_term"]
    traj = _trajectory(cfg)
    report = evolution_report(traj, "mesh", ks=[1], stride=1, checks=("measure", "gauss_bonnet"))
    lam_rel = max(abs(r.lambda_dot_fd - r.rhs_fvrby) / abs(r.lambda_dot_fd) for r in report.rows)
    gb = max(abs(s.state.gauss_bonnet_residual()) for s in traj.slices)
    measure = max(s.measure_relative for s in report.slices)
    elapsed = time.perf_counter() - t0
    ok = min(orders) >= 1.8 and lam_rel <= 0.02 and gb <= 1e-9 and measure <= 1e-4 and elapsed < 180.0
    verdict(
        10,
        ok,
        f"orders {orders[0]:.2f}/{orders[1]:.2f}, lambda' rel {lam_rel:.1e}, "
        f"Gauss-Bonnet {gb:.1e}, measure {measure:.1e}, {elapsed:.1f}s",
    )


# 11 ----------------------------------------------------------------------------
def test_criterion_11_theorem_T2():
    t0 = time.perf_counter()
    cfg = scenario("sphere_T2")
    traj = _trajectory(cfg)
    params = flow_params(cfg)
    R_T = float(traj.slices[-1].curvature.scalar)
    rep = check_T2(traj, params, R_T / 6)
    # nondecreasing within finite-difference error bars, for each of the first 5 clusters
    drops = []
    for k in range(5):
        y = traj.branch(k)
        drops.append(float(np.min(np.diff(y))))
    within = all(d >= -1e-12 for d in drops)
    cli = run_command(cfg)
    zero = check_T2(traj, params, 0.0)
    a11 = zero.predicates["A11"]
    elapsed = time.perf_counter() - t0
    ok = (
        rep.hypotheses_pass
        and within
        and rep.observed_nondecreasing
        and cli.exit_code == 0
        and a11.margin < 0
        and not zero.hypotheses_pass
        and run_command(scenario("sphere_T2_A0")).exit_code == 2
        and elapsed < 5.0
    )
    verdict(11, ok, f"A = {R_T / 6:.4f} passes, A = 0 gives A11 margin {a11.margin:.3f}, {elapsed:.2f}s")


# 12 ----------------------------------------------------------------------------
def test_criterion_12_theorem_monn():
    t0 = time.perf_counter()
    const = run_command(scenario("monn_constant_eta"))
    traj = _trajectory(scenario("monn_constant_eta"))
    spread = float(np.max(np.ptp(traj.eigenvalues(), axis=0)))
    cos = run_command(scenario("monn_cos_eta"))
    lap = cos.summary["predicates"]["laplacian_eta"]
    elapsed = time.perf_counter() - t0
    ok = (
        const.exit_code == 0
        and const.summary["hypotheses_pass"]
        and spread <= 1e-12
        and cos.exit_code == 2
        and not lap["passed"]
        and -lap["margin"] > 0
        and elapsed < 5.0 * 3
    )
    verdict(12, ok, f"constant eta exit 0 (spectrum spread {spread:.1e}); cos eta exit 2, violation {-lap['margin']:.3f}, {elapsed:.2f}s")


# 13 ----------------------------------------------------------------------------
def test_criterion_13_maximum_principle():
    t0 = time.perf_counter()
    included, excluded, worst = [], [], np.inf
    for name in sorted(SCENARIOS):
        cfg = scenario(name)
        if cfg[""]["command"] not in ("evolve", "check-hypotheses"):
            continue
        params = flow_params(cfg)
        cfg.data["run"]["m"] = 0  # eigenpairs play no part here
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            traj = _trajectory(cfg)
        trace = min(float(np.min(mono_tensor_trace(s.state, params))) for s in traj.slices)
        if params.a < 0 or trace < -1e-10 or traj.aborted:
            excluded.append(name)
            continue
        R0 = float(np.min(traj.slices[0].curvature.scalar))
        margin = min(float(np.min(s.curvature.scalar)) for s in traj.slices) - R0
        worst = min(worst, margin)
        included.append(name)
    elapsed = time.perf_counter() - t0
    ok = len(included) >= 3 and worst >= -1e-6 and elapsed < 60.0
    verdict(
        13,
        ok,
        f"{len(included)} flows, min over t of min R(t) - min R(0) = {worst:.1e} "
        f"(excluded {', '.join(excluded) or 'none'}), {elapsed:.1f}s",
    )


# 14 ----------------------------------------------------------------------------
def test_criterion_14_step1_positivity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240611)
    worst = np.inf
    for _ in range(10_000):
        n = int(rng.integers(3, 11))
        c = -0.25 * rng.uniform(0.0, 1.0)
        while c in (0.0, -0.25):
            c = -0.25 * rng.uniform(0.0, 1.0)
        a = rng.uniform(0.0, 5.0)
        bound = a / (2 * (n - 1))
        rho = bound - rng.uniform(0.0, 5.0)
        if rho >= bound:
            rho = np.nextafter(bound, -np.inf)
        worst = min(worst, step1_margin(FlowParams(a, rho, c, n)))
    elapsed = time.perf_counter() - t0
    verdict(14, worst > 0 and elapsed < 1.0, f"min 2c psi - phi over 10^4 samples {worst:.3e}, {elapsed:.2f}s")


# 15 ----------------------------------------------------------------------------
def test_criterion_15_upper_bound_and_hessian_identity():
    t0 = time.perf_counter()
    p = FlowParams(1.0, 0.1, 0.0, 3, use_average_term=True)
    s = SphereState(3, 1.0)
    assert s.flow_velocity(p) == 0.0
    k1, k2 = s.eigensolve(0.0, 3)[1:3]
    hess_err = abs(s.hessian_norm_integral(k1, 0.0) - k1.value**2 / 3)
    inthess = max(check_inthess(s, q, p, 0.0) for q in (k1, k2))
    t1a_k1 = check_upper_bound(s, k1, p, 0.0)
    t1a_k2 = check_upper_bound(s, k2, p, 0.0)

    # flat grid with a drift: stationary, so lambda' = 0
    grid = GridState.from_expressions((64, 64), "0", "0.3*cos(x)")
    pg = FlowParams(1.0, 0.1, 0.0, 2, use_average_term=True)
    grid_inthess, grid_t1a = 0.0, np.inf
    for q in grid.eigensolve(0.0, 6)[1:]:
        scale = max(1.0, q.value**2)
        grid_inthess = max(grid_inthess, check_inthess(grid, q, pg, 0.0) / scale)
        grid_t1a = min(grid_t1a, check_upper_bound(grid, q, pg, 0.0) / scale)
    elapsed = time.perf_counter() - t0
    ok = (
        hess_err <= 1e-12
        and inthess <= 1e-12
        and abs(t1a_k1) <= 1e-12
        and t1a_k2 > 0
        and grid_inthess <= 1e-6
        and grid_t1a >= -1e-6
        and elapsed < 10.0
    )
    verdict(
        15,
        ok,
        f"S^3 inthess {inthess:.1e}, T1A margins k=1 {t1a_k1:.1e} k=2 {t1a_k2:.3f}; "
        f"grid inthess {grid_inthess:.1e}, T1A {grid_t1a:.3f}, {elapsed:.2f}s",
    )
