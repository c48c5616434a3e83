import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from triflow.cluster_mesh import double_bubble, sphere_surface, theta_network
from triflow.diffgeo import build_geometry, cluster_geometry, extrapolated_trace
from triflow.errors import SolverError
from triflow.weak_form import (TripleField, assemble_Bu, assemble_Bv, assemble_boundary_load,
                               assemble_constraints, assemble_gamma_mass, assemble_system,
                               constraint_matrix)

G = np.array([1.0, 1.3, 0.8])


@pytest.fixture(scope="module")
def theta():
    m = theta_network((1, 1, 1), n=32)
    return m, cluster_geometry(m)[0]


def _lengths(caches):
    return np.array([c.measure.sum() for c in caches])


def test_mass_of_constants(theta):
    m, caches = theta
    M = assemble_gamma_mass(caches, G)
    one = np.ones(sum(m.sizes))
    assert one @ M @ one == pytest.approx(G @ _lengths(caches), rel=1e-13)


def test_mass_spd_coarse():
    m = theta_network(n=6)
    M = assemble_gamma_mass(cluster_geometry(m)[0], G).toarray()
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0


def test_mass_linear_in_gamma(theta):
    _, caches = theta
    a = assemble_gamma_mass(caches, G).diagonal()
    b = assemble_gamma_mass(caches, G * [1, 2, 1]).diagonal()
    n0, n1 = caches[0].n_vertices, caches[1].n_vertices
    assert np.array_equal(b[n0:n0 + n1], 2 * a[n0:n0 + n1])
    assert np.array_equal(b[:n0], a[:n0]) and np.array_equal(b[n0 + n1:], a[n0 + n1:])


def test_Bv_constant_kernel(theta):
    m, caches = theta
    Bv = assemble_Bv(caches, G)
    u = np.ones(sum(m.sizes))
    assert abs(u @ Bv @ u) < 1e-12
    assert np.abs(Bv @ u).max() < 1e-12


def test_Bv_sphere_dirichlet_energy():
    c = build_geometry(sphere_surface(48))
    z = c.positions[:, 2]
    val = z @ assemble_Bv([c], 1.0) @ z
    assert val == pytest.approx(8 * np.pi / 3, rel=0.02)


def test_Bv_shift(theta, rng):
    m, caches = theta
    u = rng.standard_normal(sum(m.sizes))
    d = u @ (assemble_Bv(caches, G, 1.0) - assemble_Bv(caches, G, 0.0)) @ u
    assert d == pytest.approx(u @ assemble_gamma_mass(caches, G) @ u, rel=1e-12)


def test_Bv_psd_and_Bu_sign(theta):
    _, caches = theta
    Bv = assemble_Bv(caches, G)
    assert abs(Bv - Bv.T).max() < 1e-12
    assert np.linalg.eigvalsh(Bv.toarray()).min() > -1e-10
    assert abs(assemble_Bu(caches, G, 0.5) + assemble_Bv(caches, G, 0.5)).max() == 0
    assert np.linalg.eigvalsh(assemble_Bv(caches, G, 0.1).toarray()).min() > 0


def test_constraint_rows(theta):
    m, _ = theta
    cu, cv = assemble_constraints(m, G)
    C = cu.C
    assert C.shape == (m.junction.n_nodes, sum(m.sizes))
    for k in range(C.shape[0]):
        row = C.getrow(k)
        assert row.nnz == 3
        assert np.array_equal(np.sort(row.data), np.sort(G))
    assert np.all(cu.target == 0) and np.all(cv.target == 0)


def test_duplicate_rows_rejected(theta):
    m, _ = theta
    jv = np.vstack([m.junction.vids, m.junction.vids[:1]])
    with pytest.raises(SolverError, match="duplicate"):
        constraint_matrix(jv, m.sizes, G)


def test_system_dimension(theta):
    m, caches = theta
    cu, _ = assemble_constraints(m, G)
    S = assemble_system(caches, G, 1e-3, cu)
    N = sum(m.sizes)
    assert S.matrix.shape == (2 * N + 2 * m.junction.n_nodes,) * 2
    assert abs(S.Bv - S.Bv.T).max() < 1e-12 and abs(S.Bu - S.Bu.T).max() < 1e-12


def test_zero_loads(theta):
    m, _ = theta
    lu, lv = assemble_boundary_load(m, G)
    assert not lu.any() and not lv.any()


@pytest.mark.parametrize("b5, b6", [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])
def test_u_loads_on_curves(theta, b5, b6):
    m, _ = theta
    lu, lv = assemble_boundary_load(m, G, b5=b5, b6=b6)
    off = m.offsets
    jv = m.junction.vids
    expect = {}
    if b5:
        expect.update({off[0] + v: G[0] for v in jv[:, 0]})
    if b6:
        expect.update({off[2] + v: -G[2] for v in jv[:, 2]})
    assert set(np.flatnonzero(lu).tolist()) == set(expect)
    for k, val in expect.items():
        assert lu[k] == val
    assert not lv.any()


def test_b5_surface_load_is_line_integral():
    m = double_bubble(n=48)
    lu, _ = assemble_boundary_load(m, G, b5=1.0)
    tot = lu[m.offsets[0] + m.junction.vids[:, 0]].sum()
    assert tot == pytest.approx(G[0] * 2 * np.pi * np.sqrt(3) / 2, rel=0.01)


def test_natural_jump_conditions_emerge():
    # stationary B_v u = M w with gamma-sum rows: conormal jumps vanish under refinement
    g = np.array([1.0, 1.0, 1.2])
    jumps = []
    for n in (32, 128):
        m = theta_network(tuple(g), n)
        caches, geo = cluster_geometry(m)
        C = constraint_matrix(m.junction.vids, m.sizes, g)
        w = np.concatenate([np.cos(X[:, 0] + 2 * X[:, 1]) for X in m.positions()])
        A = sp.bmat([[assemble_Bv(caches, g, 1.0), C.T], [C, None]], format="csc")
        rhs = np.concatenate([assemble_gamma_mass(caches, g) @ w, np.zeros(C.shape[0])])
        u = TripleField.from_flat(spla.spsolve(A, rhs), m.sizes)
        d = np.stack([extrapolated_trace(caches[i], u[i], m.junction.vids[:, i], geo.nu[:, i])[1]
                      for i in range(3)], axis=1)
        jumps.append(np.abs(np.diff(d, axis=1)).max())
    assert jumps[1] < 0.1 * jumps[0]
    assert jumps[1] < 0.01


def test_triple_field_ops():
    a = TripleField([np.ones(2), np.arange(3.0), np.zeros(1)])
    b = (2 * a - a) * 1.0
    assert b.sizes == (2, 3, 1)
    assert np.array_equal(b.flat(), a.flat())
    assert TripleField.from_flat(a.flat(), a.sizes)[1][2] == 2.0
    assert a.trace(np.array([[1, 2, 0]]))[0].tolist() == [1.0, 2.0, 0.0]
    assert a.max_abs() == 2.0


def test_gamma_must_be_positive(theta):
    _, caches = theta
    with pytest.raises(SolverError):
        assemble_gamma_mass(caches, (1, 0, 1))
