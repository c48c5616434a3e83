import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triflow.cluster_mesh import circle_curve, flat_disk, sphere_surface
from triflow.diffgeo import build_geometry, laplace_beltrami, surface_gradient_normal_trace
from triflow.errors import MeshError, SingularGeometryError


@pytest.fixture(scope="module")
def sphere():
    return build_geometry(sphere_surface(64, inward=True))


@pytest.fixture(scope="module")
def circle():
    return build_geometry(circle_curve(256, inward=True))


@pytest.fixture(scope="module")
def disk():
    p = flat_disk(36)
    return p, build_geometry(p)


def _interior(p):
    m = np.ones(p.n_vertices, dtype=bool)
    m[p.boundary] = False
    return m


def test_circle_curvature(circle):
    assert np.abs(circle.H - 1.0).max() < 1e-3


def test_sphere_curvature(sphere):
    assert 1500 < len(sphere.elements) < 3000
    assert np.abs(sphere.H - 2.0).max() < 0.05


def test_flat_disk_is_flat(disk):
    p, c = disk
    m = _interior(p)
    assert np.abs(c.H[m]).max() < 1e-12
    assert np.abs(c.II2[m]).max() < 1e-12


def test_cache_invariants(sphere, circle):
    for c in (sphere, circle):
        eye = np.einsum("eij,ejk->eik", c.metric_inv, c.metric)
        assert np.abs(eye - np.eye(c.dim)).max() < 1e-12
        assert np.abs(np.linalg.norm(c.normal, axis=1) - 1).max() < 1e-12
        assert np.all(c.II2 >= 0)
    assert np.array_equal(circle.II2, circle.H ** 2)


def test_degenerate_element_named():
    p = flat_disk(12)
    X = p.positions.copy()
    a, b, _ = p.elements[3]
    X[b] = X[a]
    with pytest.raises(SingularGeometryError) as info:
        build_geometry(p, X)
    assert info.value.element in {int(e) for e in np.flatnonzero((p.elements == b).any(axis=1))}


def test_laplacian_of_constant(sphere):
    assert np.abs(laplace_beltrami(sphere, np.full(sphere.n_vertices, 3.0))).max() < 1e-12


def test_sphere_eigenfunction(sphere):
    z = sphere.positions[:, 2]
    L = laplace_beltrami(sphere, z)
    rel = np.sqrt(np.sum(sphere.mass * (L + 2 * z) ** 2) / np.sum(sphere.mass * (2 * z) ** 2))
    assert rel < 0.02


def test_circle_eigenfunction(circle):
    s = np.arctan2(circle.positions[:, 1], circle.positions[:, 0])
    L = laplace_beltrami(circle, np.cos(s))
    err = np.sqrt(np.sum(circle.mass * (L + np.cos(s)) ** 2) / np.sum(circle.mass))
    assert err < 1e-3


def test_wrong_field_length(circle):
    with pytest.raises(MeshError):
        laplace_beltrami(circle, np.zeros(3))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2 ** 31))
def test_laplacian_linear(a, b, seed):
    c = build_geometry(sphere_surface(16))
    r = np.random.default_rng(seed)
    f, g = r.standard_normal((2, c.n_vertices))
    lhs = laplace_beltrami(c, a * f + b * g)
    rhs = a * laplace_beltrami(c, f) + b * laplace_beltrami(c, g)
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


def test_laplacian_symmetric(rng, sphere):
    f, g = rng.standard_normal((2, sphere.n_vertices))
    m = sphere.mass
    a = (m * laplace_beltrami(sphere, f)) @ g
    b = f @ (m * laplace_beltrami(sphere, g))
    assert abs(a - b) < 1e-12 * max(1.0, abs(a))


def test_sphere_curvature_converges():
    errs = [np.abs(build_geometry(sphere_surface(n, inward=True)).H - 2).max() for n in (24, 48)]
    assert np.log2(errs[0] / errs[1]) >= 1.0


def test_eigen_residual_order_two():
    errs = []
    for n in (24, 48):
        c = build_geometry(sphere_surface(n))
        z = c.positions[:, 2]
        r = laplace_beltrami(c, z) + 2 * z
        errs.append(np.sqrt(np.sum(c.mass * r * r)))
    assert np.log2(errs[0] / errs[1]) > 1.5


def _radial(p):
    nu = p.positions.copy()
    nu[:, 2] = 0
    return nu / np.linalg.norm(nu, axis=1, keepdims=True).clip(1e-300)


def test_trace_of_linear_field(disk):
    p, c = disk
    a = np.array([0.3, -0.7, 0.0])
    nu = _radial(p)[p.boundary]
    got = surface_gradient_normal_trace(c, p.positions @ a, p.boundary, nu)
    assert np.abs(got - nu @ a).max() < 1e-12


def test_trace_of_constant(disk):
    p, c = disk
    nu = _radial(p)[p.boundary]
    assert np.abs(surface_gradient_normal_trace(c, np.ones(p.n_vertices), p.boundary, nu)).max() < 1e-12


@pytest.mark.parametrize("method", ["element", "fit"])
def test_trace_of_distance(disk, method):
    p, c = disk
    dist = 1.0 - np.linalg.norm(p.positions[:, :2], axis=1)
    nu = _radial(p)[p.boundary]
    got = surface_gradient_normal_trace(c, dist, p.boundary, nu, method=method)
    assert np.abs(got + 1.0).max() < 0.05


def test_extrapolated_trace_exact_for_quadratics(disk):
    from triflow.diffgeo import extrapolated_trace

    p, c = disk
    x, y = p.positions[:, 0], p.positions[:, 1]
    f = 0.3 + 0.5 * x - 0.2 * y + 0.7 * x * x - 0.4 * x * y + 0.1 * y * y
    nu = _radial(p)[p.boundary]
    val, der = extrapolated_trace(c, f, p.boundary, nu)
    xb, yb = x[p.boundary], y[p.boundary]
    grad = np.stack([0.5 + 1.4 * xb - 0.4 * yb, -0.2 - 0.4 * xb + 0.2 * yb], axis=1)
    assert np.abs(val - f[p.boundary]).max() < 1e-10
    assert np.abs(der - np.einsum("ij,ij->i", grad, nu[:, :2])).max() < 1e-10


def test_trace_requires_boundary_node(disk):
    p, c = disk
    with pytest.raises(MeshError):
        surface_gradient_normal_trace(c, np.zeros(p.n_vertices), [0], [[1.0, 0, 0]])
