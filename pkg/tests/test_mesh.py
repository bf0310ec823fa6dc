import numpy as np
import pytest

from jointfuse.mesh import (MeshError, OutsideMeshError, TriangleMesh, build_mesh, fem_matrices,
                            projector, read_mesh, spde_precision, write_mesh)
from jointfuse.latent import matern_cov, params_from_range_sigma

UNIT = [(0, 0), (1, 0), (1, 1), (0, 1)]


def test_corners_of_unit_square_are_covered():
    m = build_mesh(UNIT, max_edge_inner=2.0)
    assert m.n_nodes >= 4
    P = projector(m, UNIT)
    assert P.valid.all()
    for c in UNIT:
        assert np.min(np.hypot(*(m.nodes - c).T)) < 1e-12


def test_cutoff_merges_close_points():
    pts = [(0.2, 0.2), (0.2005, 0.2), (0.7, 0.3), (0.4, 0.8)]
    m = build_mesh(pts, UNIT, max_edge_inner=2.0, cutoff=0.001)
    near = np.hypot(*(m.nodes - [0.2, 0.2]).T)
    assert np.sum(near < 0.001) == 1


def test_random_points_structural_invariants(rng):
    pts = rng.uniform(0, 100, (200, 2))
    m = build_mesh(pts, [(0, 0), (100, 0), (100, 100), (0, 100)], max_edge_inner=10.0,
                   max_edge_outer=20.0, cutoff=0.01)
    assert 100 <= m.n_nodes <= 3000
    assert np.all(m.signed_areas() > 0)
    assert projector(m, pts).valid.all()


def test_degenerate_inputs_raise():
    with pytest.raises(MeshError):
        build_mesh([(0, 0), (1, 1), (2, 2)])
    with pytest.raises(MeshError):
        build_mesh([(0, 0), (1, 0)])
    with pytest.raises(MeshError):
        build_mesh([(0.5, 0.5), (0.2, 0.2), (5.0, 5.0)], UNIT)
    with pytest.raises(MeshError):
        build_mesh(UNIT, [(0, 0), (1, 1), (1, 0), (0, 1)])  # bow-tie


@pytest.fixture(scope="module")
def mesh():
    pts = np.random.default_rng(3).uniform(0, 10, (40, 2))
    return build_mesh(pts, [(0, 0), (10, 0), (10, 10), (0, 10)], max_edge_inner=1.5,
                      max_edge_outer=3.0, cutoff=0.05)


def test_projector_at_node_and_centroid(mesh):
    P = projector(mesh, mesh.nodes[[5]]).matrix.toarray()[0]
    assert P[5] == pytest.approx(1.0)
    assert np.count_nonzero(P) == 1
    t = mesh.triangles[7]
    c = mesh.nodes[t].mean(axis=0)
    row = projector(mesh, c[None]).matrix.toarray()[0]
    np.testing.assert_allclose(row[t], 1 / 3, atol=1e-12)
    assert np.count_nonzero(row) == 3


def test_projector_reproduces_linear_field(mesh, rng):
    f = 2 * mesh.nodes[:, 0] - 3 * mesh.nodes[:, 1]
    p = rng.uniform(0.5, 9.5, (50, 2))
    np.testing.assert_allclose(projector(mesh, p).matrix @ f, 2 * p[:, 0] - 3 * p[:, 1], atol=1e-10)


def test_projector_flags_outside_points(mesh):
    P = projector(mesh, [(5, 5), (500, 500)])
    assert list(P.valid) == [True, False]
    with pytest.raises(OutsideMeshError):
        P.require_valid()


def test_fem_single_triangle():
    m = TriangleMesh(np.array([[0., 0.], [1., 0.], [0., 1.]]), np.array([[0, 1, 2]]),
                     np.zeros((0, 2)))
    C, G = fem_matrices(m)
    np.testing.assert_allclose(C.diagonal(), 1 / 6, atol=1e-15)
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    np.testing.assert_allclose(G.toarray(), expected, atol=1e-14)


def test_fem_partition_of_unity_and_null_space(mesh):
    C, G = fem_matrices(mesh)
    assert C.diagonal().sum() == pytest.approx(mesh.total_area(), rel=1e-9)
    np.testing.assert_allclose(G @ np.ones(mesh.n_nodes), 0, atol=1e-10)
    np.testing.assert_allclose((G - G.T).toarray(), 0, atol=1e-14)


def test_spde_precision_scalings(mesh):
    C, G = fem_matrices(mesh)
    Q1 = spde_precision(C, G, 0.3, -0.2)
    Q2 = spde_precision(C, G, 0.3 + np.log(2), -0.2)
    np.testing.assert_allclose(Q2.toarray(), 4 * Q1.toarray(), rtol=1e-13)
    # large kappa: kappa^4 C dominates
    Q = spde_precision(C, G, 0.0, np.log(1e6)).toarray()
    off = Q - np.diag(np.diag(Q))
    assert np.abs(off).max() / np.abs(np.diag(Q)).min() < 1e-6


def test_spde_correlation_matches_matern():
    pts = np.random.default_rng(0).uniform(0, 100, (60, 2))
    m = build_mesh(pts, [(0, 0), (100, 0), (100, 100), (0, 100)], max_edge_inner=3.0,
                   max_edge_outer=30.0, cutoff=1.0)
    rho = 30.0
    lt, lk = params_from_range_sigma(rho, 1.0)
    C, G = fem_matrices(m)
    cov = np.linalg.inv(spde_precision(C, G, lt, lk).toarray())
    # interior nodes well away from the outer mesh edge
    inner = np.flatnonzero(np.all((m.nodes > 25) & (m.nodes < 75), axis=1))
    x = m.nodes[inner]
    d = np.hypot(x[:, None, 0] - x[None, :, 0], x[:, None, 1] - x[None, :, 1])
    i, j = np.nonzero((d >= rho / 2) & (d <= 2 * rho))
    sd = np.sqrt(np.diag(cov)[inner])
    emp = cov[np.ix_(inner, inner)][i, j] / (sd[i] * sd[j])
    ref = matern_cov(d[i, j], 1.0, np.exp(lk))
    assert len(i) > 100
    assert np.max(np.abs(emp / ref - 1)) < 0.10


def test_mesh_roundtrip(tmp_path, mesh):
    write_mesh(mesh, tmp_path / "m.txt")
    m2 = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(m2.nodes, mesh.nodes)
    np.testing.assert_array_equal(m2.triangles, mesh.triangles)
    np.testing.assert_array_equal(m2.boundary, mesh.boundary)
