import warnings

import numpy as np
import pytest

from triflow import oracles
from triflow.cluster_mesh import circle_curve, theta_network
from triflow.diffgeo import build_geometry, cluster_geometry
from triflow.errors import SolverError
from triflow.linear_solver import Factorized, LinearStepInput, solve_step, step_system
from triflow.weak_form import TripleField

G = (1.0, 1.2, 0.9)


@pytest.fixture(scope="module")
def setup():
    m = theta_network(G, n=48)
    caches, _ = cluster_geometry(m)
    S = step_system(caches, G, 1e-3, m)
    return m, caches, S, Factorized(S)


def _random_input(m, S, r, with_b=True):
    u0 = TripleField([r.standard_normal(n) for n in m.sizes])
    f = TripleField([r.standard_normal(n) for n in m.sizes])
    b = r.standard_normal((6, m.junction.n_nodes)) if with_b else None
    return LinearStepInput(S, u0, f=f, b=b, mesh=m)


def _mass(S, field, zeta=None):
    """sum_i gamma_i zeta_i int u_i for a patchwise constant test function."""
    d = S.mass.diagonal() * field.flat()
    if zeta is None:
        return float(d.sum())
    off = np.concatenate([[0], np.cumsum(S.sizes)])
    return float(sum(z * d[off[i]:off[i + 1]].sum() for i, z in enumerate(zeta)))


def _admissible_constants(g):
    """Basis of patch constants zeta with gamma . zeta = 0."""
    g = np.asarray(g, dtype=float)
    return [np.array([g[1], -g[0], 0.0]), np.array([0.0, g[2], -g[1]])]


def test_zero_data(setup):
    m, _, S, F = setup
    u, v, rep = solve_step(LinearStepInput(S, TripleField.zeros(m.sizes)), F)
    assert u.max_abs() == 0 and v.max_abs() == 0


def test_residuals_and_constraints(setup, rng):
    m, _, S, F = setup
    inp = _random_input(m, S, rng)
    u, v, rep = solve_step(inp, F)
    assert rep.residual_u < 1e-10 and rep.residual_v < 1e-10
    g = np.asarray(G)
    assert np.abs(u.trace(m.junction.vids) @ g - inp.b[0]).max() < 1e-10
    assert np.abs(v.trace(m.junction.vids) @ g - inp.b[3]).max() < 1e-10


def test_gamma_mass_conserved(setup, rng):
    m, _, S, F = setup
    u0 = TripleField([rng.standard_normal(n) for n in m.sizes])
    cur = u0
    for _ in range(5):
        cur, _, _ = solve_step(LinearStepInput(S, cur), F)
    for zeta in _admissible_constants(G):
        q0 = _mass(S, u0, zeta)
        assert abs(_mass(S, cur, zeta) - q0) < 1e-10 * max(1.0, abs(q0))


def test_mass_conserved_on_closed_curve(rng):
    c = build_geometry(circle_curve(64))
    S = step_system([c], (1.3,), 1e-3)
    u0 = TripleField([rng.standard_normal(64)])
    u, _, _ = solve_step(LinearStepInput(S, u0))
    assert abs(_mass(S, u) - _mass(S, u0)) < 1e-10


def test_affine_superposition(setup, rng):
    m, _, S, F = setup
    a, b = _random_input(m, S, rng), _random_input(m, S, rng)
    ab = LinearStepInput(S, a.u_prev + b.u_prev, f=a.f + b.f, b=a.b + b.b, mesh=m)
    ua, va, _ = solve_step(a, F)
    ub, vb, _ = solve_step(b, F)
    uab, vab, _ = solve_step(ab, F)
    assert (uab - ua - ub).max_abs() < 1e-10
    assert (vab - va - vb).max_abs() < 1e-10


def test_bit_identical(setup, rng):
    m, _, S, _ = setup
    inp = _random_input(m, S, rng)
    u1, v1, _ = solve_step(inp)
    u2, v2, _ = solve_step(inp)
    assert np.array_equal(u1.flat(), u2.flat()) and np.array_equal(v1.flat(), v2.flat())


def test_dirichlet_energy_decreases(setup, rng):
    m, _, S, F = setup
    cur = TripleField([rng.standard_normal(n) for n in m.sizes])
    g = np.asarray(G)
    jv = m.junction.vids
    tr = cur.trace(jv)
    for i in range(3):
        cur.parts[i][jv[:, i]] -= g[i] * (tr @ g) / (g @ g)
    E = [cur.flat() @ S.Bv @ cur.flat()]
    for _ in range(10):
        cur, _, _ = solve_step(LinearStepInput(S, cur), F)
        E.append(cur.flat() @ S.Bv @ cur.flat())
    assert np.all(np.diff(E) <= 1e-12 * E[0])


def test_circle_mode_decay():
    c = circle_curve(256)
    cache = build_geometry(c)
    s = np.arctan2(c.positions[:, 1], c.positions[:, 0])
    dt = 1e-3
    S = step_system([cache], (1.0,), dt)
    mode = np.cos(2 * s)
    u, _, _ = solve_step(LinearStepInput(S, TripleField([mode])))
    ratio = (u[0] @ mode) / (mode @ mode)
    assert ratio == pytest.approx(oracles.curve_diffusion_mode_decay(2, dt), rel=0.05)


def test_clp_warning(setup, rng):
    m, _, S, F = setup
    inp = _random_input(m, S, rng, with_b=False)
    inp.clp_tol = 1e-8
    with pytest.warns(RuntimeWarning, match="compatibility"):
        _, _, rep = solve_step(inp, F)
    assert rep.warnings
    g = np.asarray(G)
    jv = m.junction.vids
    f = inp.f.copy()
    tr = f.trace(jv)
    for i in range(3):
        f.parts[i][jv[:, i]] -= g[i] * (tr @ g) / (g @ g)
    inp.f = f
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_step(inp, F)


def test_input_validation(setup):
    m, _, S, _ = setup
    with pytest.raises(SolverError):
        LinearStepInput(S, TripleField.zeros((3, 3, 3)))
    with pytest.raises(SolverError):
        LinearStepInput(S, TripleField.zeros(m.sizes), b=np.zeros((6, 1)))
    with pytest.raises(SolverError, match="mesh"):
        LinearStepInput(S, TripleField.zeros(m.sizes), b=np.ones((6, 2)))
    with pytest.raises(SolverError):
        step_system(cluster_geometry(m)[0], G, 0.0, m)


def test_singular_system():
    c = build_geometry(circle_curve(16))
    S = step_system([c], (1.0,), 1.0)
    S.matrix = S.matrix * 0.0
    with pytest.raises(SolverError):
        Factorized(S)
