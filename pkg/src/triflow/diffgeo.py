"""Discrete differential geometry on one patch: metric, normals, H, |II|^2, Laplacian.

Conventions: the mean curvature is the sum of principal curvatures with
``H N = Delta X``; a circle or sphere with inward normal has ``H > 0``.
All operators come from P1 finite elements with a diagonal vertex mass:
half the adjacent lengths on curves, mixed Voronoi areas on surfaces (the
barycentric lumping is not pointwise consistent on irregular triangulations).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .cluster_mesh import MEASURE_FLOOR, boundary_edges, junction_geometry, CurveFit
from .errors import MeshError, SingularGeometryError


@dataclass(frozen=True)
class GeometryCache:
    """Per-element and per-vertex geometry of one patch at fixed positions."""

    positions: np.ndarray
    elements: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray
    measure: np.ndarray
    nvec: np.ndarray
    normal: np.ndarray
    mass: np.ndarray
    stiffness: sp.csr_matrix
    H: np.ndarray
    II2: np.ndarray
    boundary: np.ndarray
    boundary_mass: np.ndarray
    conormal: np.ndarray

    @property
    def dim(self):
        return self.elements.shape[1] - 1

    @property
    def n_vertices(self):
        return self.positions.shape[0]

    def laplace_beltrami(self, f):
        return laplace_beltrami(self, f)


def stiffness_matrix(X, E, kloc=None):
    n = X.shape[0]
    if kloc is None:
        _, _, kloc = kernels.element_geometry(X, E)
    r, c, v = kernels.scatter_stiffness(E, kloc)
    K = sp.csr_matrix((v, (r, c)), shape=(n, n))
    K.sum_duplicates()
    return K


def element_metric(X, E):
    """Metric g_ab = e_a . e_b built from edge vectors e_a = x_a - x_0."""
    e = X[E[:, 1:]] - X[E[:, :1]]
    g = np.einsum("mad,mbd->mab", e, e)
    if g.shape[1] == 1:
        ginv = 1.0 / g
    else:
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
        ginv = np.empty_like(g)
        ginv[:, 0, 0] = g[:, 1, 1] / det
        ginv[:, 1, 1] = g[:, 0, 0] / det
        ginv[:, 0, 1] = ginv[:, 1, 0] = -g[:, 0, 1] / det
    return g, ginv


def boundary_lumped_measure(X, E, bverts):
    """Trace mass of each boundary vertex (1 for curve endpoints)."""
    n = X.shape[0]
    if E.shape[1] == 2:
        b = np.zeros(n)
        b[bverts] = 1.0
        return b
    be = boundary_edges(E)
    L = np.linalg.norm(X[be[:, 1]] - X[be[:, 0]], axis=1)
    return 0.5 * (np.bincount(be[:, 0], L, minlength=n) + np.bincount(be[:, 1], L, minlength=n))


def default_conormals(X, E, normal, bverts):
    """Low-order outward conormals at boundary vertices from adjacent edges."""
    n = X.shape[0]
    nu = np.zeros((n, X.shape[1]))
    if E.shape[1] == 2:
        for v in bverts:
            e = E[np.flatnonzero((E == v).any(axis=1))[0]]
            w = e[1] if e[0] == v else e[0]
            d = X[v] - X[w]
            nu[v] = d / np.linalg.norm(d)
        return nu
    be = boundary_edges(E)
    tv = np.zeros_like(X)
    for a, b in be:
        d = X[b] - X[a]
        d /= np.linalg.norm(d)
        tv[a] += d
        tv[b] += d
    cen = X[E].mean(axis=1)
    for v in bverts:
        c = np.cross(tv[v], normal[v])
        c /= np.linalg.norm(c)
        inner = cen[(E == v).any(axis=1)].mean(axis=0) - X[v]
        nu[v] = -c if c @ inner > 0 else c
    return nu


def mixed_area(X, E, meas=None):
    """Per-vertex circumcentric (Voronoi) dual areas of a triangle mesh.

    Each triangle splits into three parts via its circumcenter; parts can be
    negative at obtuse corners but always sum to the triangle area. Vertices
    whose total is not comfortably positive fall back to barycentric thirds.
    """
    n = X.shape[0]
    if meas is None:
        _, meas, _ = kernels.element_geometry(X, E)
    P = [X[E[:, a]] for a in range(3)]
    cot = np.empty((len(E), 3))
    for a in range(3):
        u = P[(a + 1) % 3] - P[a]
        w = P[(a + 2) % 3] - P[a]
        cot[:, a] = np.einsum("ij,ij->i", u, w) / (2.0 * meas)
    part = np.empty((len(E), 3))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        lab = np.sum((P[b] - P[a]) ** 2, axis=1)
        lac = np.sum((P[c] - P[a]) ** 2, axis=1)
        part[:, a] = (lac * cot[:, b] + lab * cot[:, c]) / 8.0
    vor = np.bincount(E.ravel(), part.ravel(), minlength=n)
    bary = kernels.lump(E, meas, n)
    return np.where(vor > 0.25 * bary, vor, bary)


def angle_defect(X, E):
    """2 pi minus the sum of incident triangle angles at each vertex."""
    n = X.shape[0]
    tot = np.zeros(n)
    for a in range(3):
        p = X[E[:, a]]
        u = X[E[:, (a + 1) % 3]] - p
        w = X[E[:, (a + 2) % 3]] - p
        c = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        tot += np.bincount(E[:, a], np.arccos(np.clip(c, -1, 1)), minlength=n)
    return 2 * np.pi - tot


def build_geometry(patch, positions=None, floor=MEASURE_FLOOR, conormals=None):
    """Assemble a :class:`GeometryCache` for ``patch`` at ``positions``.

    ``conormals`` optionally maps boundary vertices to outward unit conormals
    as an (n, D) array (rows of interior vertices ignored); they enter the
    boundary-corrected curvature vector.
    """
    X = np.asarray(patch.positions if positions is None else positions, dtype=float)
    E = patch.elements
    nvec, meas, kloc = kernels.element_geometry(X, E)
    bad = np.flatnonzero(meas < floor)
    if len(bad):
        raise SingularGeometryError(
            f"element {bad[0]} has measure {meas[bad[0]]:.3e} below floor {floor:.1e}", int(bad[0]))
    nvec = patch.orientation * nvec
    g, ginv = element_metric(X, E)
    n = X.shape[0]
    mass = kernels.lump(E, meas, n) if E.shape[1] == 2 else mixed_area(X, E, meas)
    gv = kernels.lump(E, nvec, n)
    normal = gv / np.linalg.norm(gv, axis=1, keepdims=True)
    K = stiffness_matrix(X, E, kloc)
    bverts = np.asarray(patch.boundary, dtype=np.int64)
    bmass = boundary_lumped_measure(X, E, bverts)
    nu = default_conormals(X, E, normal, bverts) if conormals is None else np.asarray(conormals)
    KX = K @ X
    KX[bverts] -= bmass[bverts, None] * nu[bverts]
    lapX = -KX / mass[:, None]
    H = np.einsum("ij,ij->i", lapX, normal)
    if E.shape[1] == 2:
        II2 = H * H
    else:
        kg = angle_defect(X, E) / mass
        II2 = np.maximum(H * H - 2 * kg, 0.0)
        if len(bverts):
            A = _adjacency(E, n)
            interior = np.ones(n, dtype=bool)
            interior[bverts] = False
            for v in bverts:
                nb = A.indices[A.indptr[v]:A.indptr[v + 1]]
                nb = nb[interior[nb]]
                if len(nb):
                    II2[v] = II2[nb].mean()
    return GeometryCache(X, E, g, ginv, meas, nvec, normal, mass, K, H, II2,
                         bverts, bmass, nu)


def _adjacency(E, n):
    r = np.concatenate([E[:, a] for a in range(3) for b in range(3) if a != b])
    c = np.concatenate([E[:, b] for a in range(3) for b in range(3) if a != b])
    A = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    A.sum_duplicates()
    return A


def laplace_beltrami(cache, f):
    """Mass-lumped weak Laplacian -M^{-1} K f."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != cache.n_vertices:
        raise MeshError(f"field length {f.shape[0]} != vertex count {cache.n_vertices}")
    if np.any(cache.mass <= 0):
        raise SingularGeometryError("zero vertex mass", int(np.argmin(cache.mass)))
    Kf = cache.stiffness @ f
    return -(Kf.T / cache.mass).T


def element_gradients(cache, f):
    """(m, D) piecewise-constant P1 gradients of ``f``."""
    X, E = cache.positions, cache.elements
    f = np.asarray(f, dtype=float)
    if E.shape[1] == 2:
        t = X[E[:, 1]] - X[E[:, 0]]
        l2 = np.einsum("ij,ij->i", t, t)
        return ((f[E[:, 1]] - f[E[:, 0]]) / l2)[:, None] * t
    x0, x1, x2 = X[E[:, 0]], X[E[:, 1]], X[E[:, 2]]
    cr = np.cross(x1 - x0, x2 - x0)
    A2 = np.linalg.norm(cr, axis=1)
    nh = cr / A2[:, None]
    ed = (x2 - x1, x0 - x2, x1 - x0)
    gr = np.zeros_like(x0)
    for a in range(3):
        gr += f[E[:, a]][:, None] * np.cross(nh, ed[a])
    return gr / A2[:, None]


def surface_gradient_normal_trace(cache, f, nodes, conormals, method="element", patch=None):
    """Conormal derivative of ``f`` at the given boundary vertices.

    ``method='element'`` averages the gradients of the adjacent elements
    (exact for linear fields); ``'fit'`` uses the local quadratic fits of
    the junction geometry and is second-order accurate (needs ``patch`` for
    the curve case). ``'extrapolate'`` fits interior values only, see
    :func:`extrapolated_trace`.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    nu = np.asarray(conormals, dtype=float)
    bset = set(cache.boundary.tolist())
    for v in nodes:
        if int(v) not in bset:
            raise MeshError(f"vertex {v} is not on the patch boundary")
    if method == "fit":
        return _fit_trace(cache, f, nodes, nu)
    if method == "extrapolate":
        return extrapolated_trace(cache, f, nodes, nu)[1]
    gr = element_gradients(cache, f)
    E = cache.elements
    out = np.empty(len(nodes))
    for q, v in enumerate(nodes):
        adj = np.flatnonzero((E == v).any(axis=1))
        w = cache.measure[adj]
        g = (gr[adj] * w[:, None]).sum(axis=0) / w.sum()
        out[q] = g @ nu[q]
    return out


def _fit_trace(cache, f, nodes, nu):
    from .cluster_mesh import SurfaceFit, k_ring, curve_chain

    f = np.asarray(f, dtype=float)
    X = cache.positions
    out = np.empty(len(nodes))
    if cache.dim == 1:
        for q, v in enumerate(nodes):
            fit = CurveFit(curve_chain(cache.elements, v), X)
            out[q] = fit.outward_derivative(f)
        return out
    A = _adjacency(cache.elements, cache.n_vertices)
    for q, v in enumerate(nodes):
        ring = k_ring(A, v, 2)
        n0 = cache.normal[v]
        t = np.cross(n0, nu[q])
        fit = SurfaceFit(X, v, ring, n0, t)
        out[q] = fit.gradient(f) @ nu[q]
    return out


def extrapolated_trace(cache, f, nodes, conormals, normals=None, rings=3):
    """Junction value and conormal derivative of ``f`` from interior vertices.

    Boundary values of lumped curvature carry the one-sided correction and are
    first-order at best; fitting a quadratic to interior values only (arc
    length for curves, a ``rings``-ring in the tangent plane for surfaces) and
    evaluating it at the node avoids that layer.
    """
    from .cluster_mesh import curve_chain, k_ring

    f = np.asarray(f, dtype=float)
    X = cache.positions
    nu = np.asarray(conormals, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    val = np.empty(len(nodes))
    der = np.empty(len(nodes))
    if cache.dim == 1:
        for q, v in enumerate(nodes):
            ch = curve_chain(cache.elements, v)[:4]
            s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(X[ch], axis=0), axis=1))])
            c = np.polyfit(s[1:], f[ch[1:]], 2)
            val[q] = c[2]
            der[q] = -c[1]
        return val, der
    A = _adjacency(cache.elements, cache.n_vertices)
    bset = set(cache.boundary.tolist())
    for q, v in enumerate(nodes):
        pts = [r for r in k_ring(A, v, rings) if r not in bset]
        n0 = cache.normal[v] if normals is None else np.asarray(normals[q], dtype=float)
        e1 = nu[q] - (nu[q] @ n0) * n0
        e1 = e1 / np.linalg.norm(e1)
        e2 = np.cross(n0, e1)
        D = X[pts] - X[v]
        x, y = D @ e1, D @ e2
        B = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)
        c = np.linalg.lstsq(B, f[pts], rcond=None)[0]
        val[q] = c[0]
        der[q] = c[1]
    return val, der


def measure_ratio(ref, cur):
    """Element-wise surface measure ratio (discrete J_rho)."""
    return cur.measure / ref.measure


def cluster_geometry(mesh, Xs=None):
    """Geometry caches for all patches with fitted junction conormals."""
    Xs = mesh.positions() if Xs is None else Xs
    geo = junction_geometry(mesh, Xs)
    caches = []
    for i, p in enumerate(mesh.patches):
        nu = np.zeros_like(Xs[i])
        nu[mesh.junction.vids[:, i]] = geo.nu[:, i]
        caches.append(build_geometry(p, Xs[i], mesh.floor, nu))
    return caches, geo
