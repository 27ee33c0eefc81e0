import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from curvspec.analytic import FlatTorusState, SphereState
from curvspec.engine import run, step
from curvspec.grid import GridState, check_product_rule
from curvspec.grid.spectral import random_band_limited
from curvspec.mesh import MeshState
from curvspec.params import FlowClass, FlowParams, classify_flow, derive_coefficients, step1_margin
from curvspec.types import cluster_ranges
from curvspec.verifier import check_T2, minimal_A, rhs_appendix_rewrite, rhs_fvrby, rhs_surface

finite = st.floats(-10, 10, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)

GRID = GridState.from_expressions((24, 24))
ICO = MeshState.icosphere(2)


@st.composite
def flow_g_params(draw):
    n = draw(st.integers(3, 10))
    a = draw(st.floats(0, 5))
    bound = a / (2 * (n - 1))
    rho = draw(st.floats(-5, bound, exclude_max=True)) if bound > -5 else -5.0
    c = draw(st.floats(-0.25, 0, exclude_min=True, exclude_max=True))
    return FlowParams(a, rho, c, n)


@given(flow_g_params())
@settings(max_examples=500)
def test_step1_positive_in_flow_G(p):
    assert step1_margin(p) > 0


@given(finite, finite, st.integers(2, 12))
def test_derived_coefficients_relation(a, rho, n):
    phi, psi = derive_coefficients(a, rho, n)
    assert (phi, psi) == derive_coefficients(a, rho, n)
    assert phi + psi == pytest.approx((2 - n) * rho, abs=1e-9)


@given(st.integers(2, 10), st.booleans())
def test_named_flows_are_classified(n, on):
    assert classify_flow(FlowParams(1.0, 0.0, n=n, use_average_term=on)) is not FlowClass.GENERAL
    assert classify_flow(FlowParams(0.0, -0.5, n=n, use_average_term=True)) is FlowClass.NORMALIZED_YAMABE
    assert classify_flow(FlowParams(1.0, 0.3, n=n)) is FlowClass.RICCI_BOURGUIGNON


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_cluster_ranges_partition_sorted_values(values):
    values = sorted(values)
    ranges = cluster_ranges(values)
    assert [k for r in ranges for k in r] == list(range(len(values)))


@given(st.integers(2, 5), st.floats(0.2, 5), st.floats(0, 2), st.floats(0, 0.5), st.floats(1e-4, 1e-2))
def test_sphere_fixed_point_with_average_term(n, rsq, a, rho_frac, dt):
    p = FlowParams(a, rho_frac * a / (2 * (n - 1)), n=n, use_average_term=True)
    s = SphereState(n, rsq)
    assert step(s, p, dt, safety=np.inf) == s


@given(st.integers(2, 5), st.floats(0.5, 5), st.floats(0, 2), st.integers(1, 20))
def test_sphere_radius_is_affine(n, rsq, a, steps):
    p = FlowParams(a, 0.0, n=n)
    dt = 0.01 * rsq / (2 * (n - 1) * max(a, 1e-3)) / steps
    s = SphereState(n, rsq)
    for _ in range(steps):
        s = step(s, p, dt, safety=np.inf)
    expected = rsq + 2 * (n - 1) * p.phi * dt * steps
    assert s.radius_sq == pytest.approx(expected, rel=1e-12)


@given(st.integers(3, 5), st.floats(0, 0.5), st.floats(-0.2, 0.2))
def test_flat_torus_formulas_vanish(n, rho, c):
    p = FlowParams(1.0, rho, c, n)
    t = FlatTorusState(n, (2 * math.pi,) * n)
    for pair in t.eigensolve(c, 4):
        assert rhs_fvrby(t, pair, p) == 0
        assert rhs_appendix_rewrite(t, pair, p) == 0


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_grid_operator_symmetric_in_weighted_product(seed):
    rng = np.random.default_rng(seed)
    g = GRID.grid
    state = GRID.with_fields(w=random_band_limited(g, rng, 3, 0.3), eta=random_band_limited(g, rng, 3, 0.5))
    K, A, mass = state.assemble(-0.1)
    # generalized problem A u = lambda M u with diagonal M: symmetry of A is symmetry in the mass product
    assert np.array_equal(A, A.T)
    assert np.all(mass > 0)
    x = rng.standard_normal(g.size)
    np.testing.assert_allclose(K @ x, state.stiffness_apply(x).ravel(), atol=1e-10)
    f1, f2 = random_band_limited(g, rng, 3), random_band_limited(g, rng, 3)
    assert check_product_rule(state, f1, f2).relative < 1e-10


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_grid_rayleigh_identity_and_spectrum_bounds(seed):
    rng = np.random.default_rng(seed)
    state = GRID.with_fields(w=random_band_limited(GRID.grid, rng, 3, 0.3), eta=random_band_limited(GRID.grid, rng, 3, 0.5))
    pairs = state.eigensolve(0.0, 4)
    values = [p.value for p in pairs]
    assert values == sorted(values)
    assert abs(values[0]) < 1e-10
    np.testing.assert_allclose(pairs[0].vector, pairs[0].vector.flat[0], rtol=1e-8)
    for c in (0.0, -0.2):
        for p in state.eigensolve(c, 4):
            t = state.integral_terms(p, c)
            assert abs(p.value - (t.grad2 - c * t.u2_R)) <= 1e-8 * max(1, abs(p.value))


@given(seeds)
@settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_mesh_invariants_under_random_conformal_factor(seed):
    rng = np.random.default_rng(seed)
    V = ICO.vertices
    w = 0.2 * np.sin(rng.uniform(1, 3) * V[:, 0] + rng.uniform(0, 6)) * V[:, 1]
    eta = 0.3 * V[:, rng.integers(3)]
    state = ICO.with_fields(w=w, eta=eta)
    assert abs(state.gauss_bonnet_residual()) < 1e-9
    pairs = state.eigensolve(0.0, 4)
    assert abs(pairs[0].value) < 1e-10
    for c in (0.0, -0.2):
        for p in state.eigensolve(c, 4):
            t = state.integral_terms(p, c)
            assert abs(p.value - (t.grad2 - c * t.u2_R)) <= 1e-8 * max(1, abs(p.value))
            ref = rhs_fvrby(state, p, FlowParams(1.0, 0.0, c))
            assert rhs_surface(state, p, FlowParams(1.0, 0.0, c)) == pytest.approx(ref, rel=1e-2, abs=1e-10)


@given(st.integers(3, 5), st.floats(0.1, 2), st.floats(0, 1))
@settings(max_examples=15, deadline=None)
def test_T2_hypotheses_imply_monotone_branches(n, a, rho_frac):
    p = FlowParams(a, rho_frac * a / (2 * (n - 1)), n=n)
    traj = run(SphereState(n, 1.0), p, 0.02, dt=2e-3, m=4, safety=np.inf)
    rep = check_T2(traj, p, minimal_A(traj, p, "T2"))
    assert rep.consistent
