import math

import numpy as np
import pytest

from curvspec.mesh import MeshState, build_topology, icosphere, read_obj, read_off, read_vertex_csv
from curvspec.params import FlowParams
from curvspec.types import MeshError, TriangleInequalityError

TETRA_OFF = """OFF
# regular tetrahedron
4 4 0
1 1 1
1 -1 -1
-1 1 -1
-1 -1 1
3 0 1 2
3 0 3 1
3 0 2 3
3 1 3 2
"""

TETRA_FACES = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]


@pytest.fixture(scope="module")
def sphere3():
    return MeshState.icosphere(3)


def test_read_off_tetrahedron():
    V, F = read_off(TETRA_OFF)
    topo = build_topology(F, len(V))
    assert V.shape == (4, 3)
    assert len(topo.edges) == 6
    assert topo.euler_characteristic == 2


def test_read_obj_with_texture_indices_and_negative_refs():
    text = "v 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1\nf 1/1 2/2 3/3\nf 1 4 2\nf -4 -2 -1\nf 2 4 3\n"
    V, F = read_obj(text)
    np.testing.assert_array_equal(F, TETRA_FACES)


def test_read_off_rejects_quads():
    with pytest.raises(MeshError):
        read_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")


@pytest.mark.parametrize(
    "faces, nv, message",
    [
        ([[0, 1, 2]], 3, "boundary"),
        ([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]], 4, "oriented"),
        (TETRA_FACES, 5, "not used"),
        (TETRA_FACES + [[f[0] + 4, f[1] + 4, f[2] + 4] for f in TETRA_FACES], 8, "components"),
        ([[0, 0, 1]], 2, "repeats"),
        ([[0, 1, 7]], 3, "out of range"),
    ],
)
def test_build_topology_validation(faces, nv, message):
    with pytest.raises(MeshError, match=message):
        build_topology(faces, nv)


def test_vertex_csv_parsing():
    values = read_vertex_csv("vertex_index,value\n1,0.5\n0,-1\n2,3\n", 3)
    np.testing.assert_array_equal(values, [-1.0, 0.5, 3.0])
    with pytest.raises(MeshError, match="twice"):
        read_vertex_csv("0,1\n0,2\n1,0\n", 2)
    with pytest.raises(MeshError, match="no value"):
        read_vertex_csv("0,1\n", 2)
    with pytest.raises(MeshError, match="range"):
        read_vertex_csv("0,1\n5,0\n", 2)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_icosphere_counts(level):
    V, F = icosphere(level)
    assert len(V) == 10 * 4**level + 2
    assert len(F) == 20 * 4**level
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0)


def test_gauss_bonnet_and_area(sphere3):
    assert abs(sphere3.gauss_bonnet_residual()) < 1e-12
    assert sphere3.vertex_areas.sum() == pytest.approx(4 * math.pi, rel=5e-3)
    assert sphere3.integrate_riemannian(sphere3.scalar_curvature) == pytest.approx(8 * math.pi, rel=1e-12)


def test_flat_torus_mesh_is_flat():
    st = MeshState.flat_torus(12, 10)
    assert st.topology.euler_characteristic == 0
    np.testing.assert_allclose(st.scalar_curvature, 0.0, atol=1e-12)
    assert st.vertex_areas.sum() == pytest.approx(4 * math.pi**2)


def test_stiffness_symmetric_with_zero_row_sums(sphere3):
    st = sphere3.with_fields(eta=sphere3.vertices[:, 2] * 0.3)
    K = st.stiffness.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)


def test_witten_is_self_adjoint_in_weighted_measure(sphere3):
    st = sphere3.with_fields(eta=0.3 * sphere3.vertices[:, 0])
    rng = np.random.default_rng(0)
    f, g = rng.standard_normal((2, st.n_vertices))
    assert st.overlap(f, st.witten(g)) == pytest.approx(st.overlap(st.witten(f), g), rel=1e-12)


def test_torus_cotan_laplacian_converges():
    errs = []
    for n in (16, 32):
        st = MeshState.flat_torus(n, n)
        x = 2 * math.pi * np.repeat(np.arange(n), n) / n
        y = 2 * math.pi * np.tile(np.arange(n), n) / n
        f = np.cos(x) * np.sin(y)
        errs.append(np.max(np.abs(st.laplacian(f) + 2 * f)))
    assert errs[1] < errs[0] / 3.5


def test_icosphere_first_cluster(sphere3):
    pairs = sphere3.eigensolve(0.0, 4)
    vals = np.array([p.value for p in pairs])
    assert abs(vals[0]) < 1e-10
    np.testing.assert_allclose(vals[1:], 2.0, rtol=1e-4)


def test_constant_conformal_factor_rescales_spectrum(sphere3):
    scaled = sphere3.with_fields(w=np.full(sphere3.n_vertices, 0.25))
    a = np.array([p.value for p in sphere3.eigensolve(0.0, 4)])
    b = np.array([p.value for p in scaled.eigensolve(0.0, 4)])
    np.testing.assert_allclose(b, a * math.exp(-0.5), rtol=1e-10, atol=1e-12)


def test_triangle_inequality_violation_raises(sphere3):
    w = np.zeros(sphere3.n_vertices)
    # raise one corner and lower a neighbour: one side shrinks, another grows
    j = sphere3.faces[0, 1]
    w[sphere3.faces[0, 0]], w[j] = 5.0, -5.0
    with pytest.raises(TriangleInequalityError):
        sphere3.with_fields(w=w)


def test_flow_velocity_and_snapshot_round_trip(sphere3):
    p = FlowParams(1.0, 0.0, n=2)
    np.testing.assert_allclose(sphere3.flow_velocity(p), -0.5 * sphere3.scalar_curvature)
    with pytest.raises(ValueError):
        sphere3.flow_velocity(FlowParams(1.0, 0.0, n=3))
    st = sphere3.with_fields(eta=0.1 * sphere3.vertices[:, 1])
    back = MeshState.from_json(st.to_json())
    np.testing.assert_array_equal(back.eta, st.eta)
    np.testing.assert_array_equal(back.faces, st.faces)
    with pytest.raises(ValueError):
        MeshState.from_json('{"bogus": 1}')


def test_load_mesh_with_eta_file(tmp_path):
    (tmp_path / "t.off").write_text(TETRA_OFF)
    (tmp_path / "eta.csv").write_text("vertex_index,value\n0,0\n1,0.1\n2,0.2\n3,0.3\n")
    st = MeshState.load(tmp_path / "t.off", tmp_path / "eta.csv")
    np.testing.assert_allclose(st.eta, [0, 0.1, 0.2, 0.3])
    assert abs(st.gauss_bonnet_residual()) < 1e-12


def test_icosphere_curvature_l2_accuracy():
    # pointwise error stays near 15% at valence-5 vertices; the area-weighted L2 error converges
    errs = []
    for level in (3, 4, 5):
        st = MeshState.icosphere(level)
        A, R = st.vertex_areas, st.scalar_curvature
        errs.append(np.sqrt(np.sum(A * (R - 2) ** 2) / np.sum(A)) / 2)
    assert errs[0] < 0.03
    assert errs[1] < errs[0] / 1.8 and errs[2] < errs[1] / 1.8
