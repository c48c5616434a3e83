"""Direct mapping over a reference cluster: Young angles, T, tangential frame.

A deformed cluster is written over a reference as

    X^i(x) = x + rho^i(x) N^i(x) + mu^i(x) tau^i(x),

with ``mu`` slaved to the junction trace of ``rho`` by ``mu = T rho`` and
extended away from the junction by nearest-node projection and a quintic
cutoff. At junction vertices the frame (tau, N) is an exact Young star
(best-fit rotation of the ideal conormals), so concurrency of the deformed
junction holds to rounding for every admissible trace.
"""
from __future__ import annotations

from itertools import combinations_with_replacement
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import kernels
from .cluster_mesh import ClusterMesh, junction_geometry, curve_chain
from .errors import AngleError, ConfigError, FoldOverError, MeshError

ANGLE_PAIRS = ((1, 2, 0), (2, 0, 1), (0, 1, 2))  # (i, j, k): theta_k = angle(nu_i, nu_j)


def young_angles(gamma):
    """Angles theta_k between conormals nu_i, nu_j solving Young's law."""
    g = np.asarray(gamma, dtype=float)
    if g.shape != (3,) or np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise AngleError(f"surface tensions must be positive, got {gamma}")
    th = np.empty(3)
    for i, j, k in ANGLE_PAIRS:
        if not g[k] < g[i] + g[j]:
            raise AngleError(f"no Young angles: gamma[{k}]={g[k]} >= gamma[{i}]+gamma[{j}]")
        c = (g[k] ** 2 - g[i] ** 2 - g[j] ** 2) / (2 * g[i] * g[j])
        th[k] = np.arccos(np.clip(c, -1.0, 1.0))
    return th


def tangent_coupling_matrix(theta, tol=1e-12):
    """3x3 matrix T with mu = T rho keeping the junction concurrent."""
    th = np.asarray(theta, dtype=float)
    s, c = np.sin(th), np.cos(th)
    if np.any(np.abs(s) < tol):
        raise AngleError(f"singular angle in {th}: sin vanishes")
    return np.array([
        [0.0, c[1] / s[0], -c[2] / s[0]],
        [-c[0] / s[1], 0.0, c[2] / s[1]],
        [c[0] / s[2], -c[1] / s[2], 0.0],
    ])


@dataclass
class PhysicsParams:
    """Surface tensions with derived angles plus stepping controls."""

    gamma: tuple = (1.0, 1.0, 1.0)
    C_u: float = 0.0
    C_v: float = 0.0
    dt: float = 1e-4
    tol: float = 1e-11
    max_iters: int = 30
    eps_ref: float | None = None
    w_tau: float | None = None
    theta: np.ndarray = field(init=False)
    T: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gamma = tuple(float(x) for x in self.gamma)
        if self.dt <= 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.C_u < 0 or self.C_v < 0:
            raise ConfigError("coercivity shifts must be non-negative")
        if self.w_tau is not None and self.w_tau <= 0:
            raise ConfigError("tangential support width must be positive")
        self.theta = young_angles(self.gamma)
        self.T = tangent_coupling_matrix(self.theta)

    @property
    def g(self):
        return np.asarray(self.gamma)


def rotate_star(gamma, nu_fit, t):
    """Best-fit rotation of the ideal Young star into the plane normal to ``t``.

    ``nu_fit`` is (3, 3) (ambient 3-vectors), ``t`` a unit 3-vector. Returns
    the ideal conormals (3, 3) with (nu1 x nu2).t < 0.
    """
    th = young_angles(gamma)
    e1 = nu_fit[0] - (nu_fit[0] @ t) * t
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(t, e1)
    offs = np.array([0.0, -th[2], -th[2] - th[0]])
    phi = np.arctan2(nu_fit @ e2, nu_fit @ e1)
    alpha = np.angle(np.sum(np.exp(1j * (phi - offs))))
    a = alpha + offs
    return np.cos(a)[:, None] * e1[None, :] + np.sin(a)[:, None] * e2[None, :]


def _embed3(v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 3:
        return v
    return np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], axis=-1)


def quintic_cutoff(dist, w):
    """1 on [0, w/2], smooth quintic ramp to 0 at w, 0 beyond."""
    s = np.clip((np.asarray(dist) - 0.5 * w) / (0.5 * w), 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _edge_graph(patch, X):
    E = patch.elements
    if E.shape[1] == 2:
        pairs = E
    else:
        pairs = np.concatenate([E[:, [0, 1]], E[:, [1, 2]], E[:, [2, 0]]])
    w = np.linalg.norm(X[pairs[:, 0]] - X[pairs[:, 1]], axis=1)
    n = patch.n_vertices
    G = sp.coo_matrix((w, (pairs[:, 0], pairs[:, 1])), shape=(n, n)).tocsr()
    return G.maximum(G.T)


def boundary_element_length(mesh):
    """Mean length of patch elements touching the junction."""
    if mesh.dim == 2:
        P = mesh.junction_points()[:, 0]
        seg = np.roll(P, -1, axis=0) - P if mesh.junction.closed else np.diff(P, axis=0)
        return float(np.linalg.norm(seg, axis=1).mean())
    ls = []
    for i, p in enumerate(mesh.patches):
        for v in mesh.junction.vids[:, i]:
            ch = curve_chain(p.elements, v)
            ls.append(np.linalg.norm(p.positions[ch[1]] - p.positions[ch[0]]))
    return float(np.mean(ls))


def patch_inradii(mesh):
    """Per patch: the largest graph distance from any vertex to the junction."""
    out = []
    for i, p in enumerate(mesh.patches):
        G = _edge_graph(p, p.positions)
        d = dijkstra(G, indices=mesh.junction.vids[:, i], min_only=True)
        out.append(float(d.max()))
    return np.array(out)


@dataclass
class TangentialFrame:
    """Reference frame fields for the graph map on each patch."""

    normal: list
    tau: list
    weight: list
    nearest: list
    dist: list
    nuhat: np.ndarray
    tangent: np.ndarray
    w_tau: float
    gamma: tuple
    T: np.ndarray
    geometry: object = None

    @property
    def n_nodes(self):
        return self.nuhat.shape[0]


def build_tangential_frame(mesh, gamma, w_tau=None):
    """Construct tau, cutoff, nearest-node projection and junction stars."""
    if not isinstance(mesh, ClusterMesh):
        raise MeshError("expected a ClusterMesh")
    th = young_angles(gamma)
    T = tangent_coupling_matrix(th)
    if w_tau is None:
        w_tau = 4.0 * boundary_element_length(mesh)
    if w_tau <= 0:
        raise ConfigError("tangential support width must be positive")
    rin = patch_inradii(mesh)
    if w_tau >= rin.min():
        raise MeshError(
            f"support width {w_tau:.4g} exceeds the smallest patch inradius {rin.min():.4g};"
            " nearest-node projection would be ambiguous")
    geo = junction_geometry(mesh)
    D = mesh.ambient
    J = mesh.junction.n_nodes
    nuhat = np.empty((J, 3, D))
    nhat = np.empty((J, 3, D))
    for k in range(J):
        t = geo.tangent[k]
        star = rotate_star(gamma, _embed3(geo.nu[k]), t)
        nuhat[k] = star[:, :D]
        nhat[k] = np.cross(star, t[None, :])[:, :D]
    normal, tau, weight, nearest, dist = [], [], [], [], []
    for i, p in enumerate(mesh.patches):
        X = p.positions
        nvec, _ = p.oriented_vector_areas(X)
        g = kernels.lump(p.elements, nvec, p.n_vertices)
        N = g / np.linalg.norm(g, axis=1, keepdims=True)
        jv = mesh.junction.vids[:, i]
        G = _edge_graph(p, X)
        dm = dijkstra(G, indices=jv)
        near = np.argmin(dm, axis=0)
        dd = dm[near, np.arange(p.n_vertices)]
        w = quintic_cutoff(dd, w_tau)
        tv = nuhat[near, i]
        tv = tv - np.einsum("ij,ij->i", tv, N)[:, None] * N
        nrm = np.linalg.norm(tv, axis=1)
        ok = (dd <= w_tau) & (nrm > 1e-12)
        tv = np.where(ok[:, None], tv / np.where(nrm > 0, nrm, 1.0)[:, None], 0.0)
        w = np.where(ok, w, 0.0)
        N[jv] = nhat[:, i]
        tv[jv] = nuhat[:, i]
        w[jv] = 1.0
        dd[jv] = 0.0
        near[jv] = np.arange(J)
        normal.append(N)
        tau.append(tv)
        weight.append(w)
        nearest.append(near)
        dist.append(dd)
    return TangentialFrame(normal, tau, weight, nearest, dist, nuhat, geo.tangent,
                           float(w_tau), tuple(float(x) for x in gamma), T, geo)


def junction_trace(mesh, rho):
    """(J, 3) junction values of a per-patch field."""
    return np.stack([np.asarray(rho[i])[mesh.junction.vids[:, i]] for i in range(3)], axis=1)


def mu_from_rho(frame, T, rho_sigma):
    """Tangential field mu: (T rho_sigma)[nearest node] scaled by the cutoff."""
    rs = np.asarray(rho_sigma, dtype=float)
    m = rs @ np.asarray(T).T
    return [frame.weight[i] * m[frame.nearest[i], i] for i in range(3)]


def displacement(frame, rho, mesh):
    """Per-patch displacement rho N + mu tau."""
    mu = mu_from_rho(frame, frame.T, junction_trace(mesh, rho))
    return [np.asarray(rho[i])[:, None] * frame.normal[i] + mu[i][:, None] * frame.tau[i]
            for i in range(3)]


def apply_graph(mesh_ref, frame, rho, mu=None, check=True):
    """Deformed positions x + rho N + mu tau on every patch."""
    if mu is None:
        mu = mu_from_rho(frame, frame.T, junction_trace(mesh_ref, rho))
    Xs = []
    for i, p in enumerate(mesh_ref.patches):
        r = np.asarray(rho[i], dtype=float)
        m = np.asarray(mu[i], dtype=float)
        if r.shape != (p.n_vertices,) or m.shape != (p.n_vertices,):
            raise MeshError(f"field size mismatch on patch {i}")
        Xs.append(p.positions + r[:, None] * frame.normal[i] + m[:, None] * frame.tau[i])
    if check:
        check_fold_over(mesh_ref, Xs)
    return Xs


def check_fold_over(mesh_ref, Xs):
    """Raise FoldOverError on degenerate or flipped deformed elements."""
    for i, (p, X) in enumerate(zip(mesh_ref.patches, Xs)):
        n0, _, _ = kernels.element_geometry(p.positions, p.elements)
        n1, meas, _ = kernels.element_geometry(X, p.elements)
        bad = np.flatnonzero((meas < mesh_ref.floor) | (np.einsum("ij,ij->i", n0, n1) <= 0))
        if len(bad):
            raise FoldOverError(f"fold-over on patch {i} at element {bad[0]}", i, int(bad[0]))


def deform(mesh_ref, frame, rho, check=True):
    """Deformed cluster sharing the reference connectivity."""
    return mesh_ref.with_positions(apply_graph(mesh_ref, frame, rho, check=check))


def graph_operator(mesh, frame):
    """Sparse P with flat(X) = flat(sigma) + P flat(rho).

    Rows enumerate (patch, vertex, component), columns (patch, vertex).
    """
    D = mesh.ambient
    off = mesh.offsets
    rows, cols, vals = [], [], []
    jv = mesh.junction.vids
    for i, p in enumerate(mesh.patches):
        n = p.n_vertices
        base = off[i] * D
        vid = np.arange(n)
        for c in range(D):
            rows.append(base + vid * D + c)
            cols.append(off[i] + vid)
            vals.append(frame.normal[i][:, c])
        act = np.flatnonzero(frame.weight[i] > 0)
        k = frame.nearest[i][act]
        for j in range(3):
            coef = frame.T[i, j] * frame.weight[i][act]
            if frame.T[i, j] == 0:
                continue
            for c in range(D):
                rows.append(base + act * D + c)
                cols.append(off[j] + jv[k, j])
                vals.append(coef * frame.tau[i][act, c])
    R = np.concatenate(rows)
    C = np.concatenate(cols)
    V = np.concatenate(vals)
    P = sp.csr_matrix((V, (R, C)), shape=(off[-1] * D, off[-1]))
    P.sum_duplicates()
    return P


def admissible_trace(rng, J, gamma, scale=1.0):
    """Random (J, 3) junction values with gamma . rho = 0 per node."""
    g = np.asarray(gamma, dtype=float)
    r = rng.standard_normal((J, 3)) * scale
    return r - np.outer(r @ g, g) / (g @ g)


def _half_extent(mesh):
    P = np.concatenate(mesh.positions())
    return 0.5 * float((P.max(axis=0) - P.min(axis=0)).max())


def windowed_curve_perturbation(mesh, rng, amplitude, modes=3, power=6):
    """Smooth normal offsets on each curve vanishing to high order at both ends."""
    rho = []
    for i, p in enumerate(mesh.patches):
        ch = curve_chain(p.elements, mesh.junction.vids[0, i])
        X = p.positions[ch]
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(X, axis=0), axis=1))])
        s /= s[-1]
        coef = rng.uniform(-1.0, 1.0, modes)
        f = sum(c * np.sin((m + 1) * np.pi * s) for m, c in enumerate(coef))
        f *= np.sin(np.pi * s) ** power
        r = np.zeros(p.n_vertices)
        r[ch] = f
        rho.append(r)
    peak = max(np.abs(r).max() for r in rho)
    scale = amplitude * _half_extent(mesh) / peak if peak > 0 else 0.0
    return [scale * r for r in rho]


def smooth_admissible_perturbation(mesh, gamma, rng, amplitude, degree=2):
    """Low-degree polynomial offsets corrected so gamma . rho = 0 at the junction."""
    g = np.asarray(gamma, dtype=float)
    P = np.concatenate(mesh.positions())
    c0 = 0.5 * (P.max(axis=0) + P.min(axis=0))
    h = _half_extent(mesh)

    def basis(X):
        Y = (X - c0) / h
        cols = [np.ones(len(Y))]
        for k in range(1, degree + 1):
            for idx in combinations_with_replacement(range(Y.shape[1]), k):
                cols.append(np.prod(Y[:, list(idx)], axis=1))
        return np.stack(cols, axis=1)

    nb = basis(P[:1]).shape[1]
    coef = rng.uniform(-1.0, 1.0, (3, nb))

    def f(i, X):
        return basis(X) @ coef[i]

    rho = []
    for i, p in enumerate(mesh.patches):
        X = p.positions
        fi = f(i, X)
        c = sum(g[j] * f(j, X) for j in range(3))
        rho.append(fi - g[i] * c / (g @ g))
    peak = max(np.abs(r).max() for r in rho)
    scale = amplitude * h / peak if peak > 0 else 0.0
    return [scale * r for r in rho]


def perturbation_offsets(mesh, gamma, amplitude=0.05, seed=0, keep_junction=True, degree=2):
    """The seeded normal offsets used by :func:`perturb_cluster`."""
    rng = np.random.default_rng(seed)
    if keep_junction:
        if mesh.dim != 1:
            raise MeshError("junction-preserving perturbations are implemented for curves")
        return windowed_curve_perturbation(mesh, rng, amplitude)
    return smooth_admissible_perturbation(mesh, gamma, rng, amplitude, degree)


def perturb_cluster(mesh, gamma, amplitude=0.05, seed=0, keep_junction=True, degree=2):
    """Seeded smooth perturbation of a reference cluster, returned as a new mesh.

    ``keep_junction`` selects offsets vanishing to high order at the junction
    (curves only); otherwise a generic admissible polynomial field is used.
    """
    frame = build_tangential_frame(mesh, gamma)
    rho = perturbation_offsets(mesh, gamma, amplitude, seed, keep_junction, degree)
    out = deform(mesh, frame, rho)
    meta = dict(mesh.meta)
    meta.update(amplitude=amplitude, seed=seed, degree=degree)
    return mesh.with_positions(out.positions(), meta=meta)
