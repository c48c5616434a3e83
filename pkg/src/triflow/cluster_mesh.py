"""Triple-junction cluster meshes: types, generators, validation, conormals.

A cluster consists of three oriented patches (curves for ``dim == 1``,
triangulated surfaces for ``dim == 2``) whose boundaries are glued along a
junction. The gluing is stored as an explicit node table: junction node ``k``
identifies vertex ``junction.vids[k, i]`` of patch ``i`` for ``i = 0, 1, 2``.

Normal orientation convention
-----------------------------
At every junction node let ``t`` be the unit vector with
``(nu1 x nu2) . t < 0``. Then ``N^i = nu^i x t`` for all three patches.
With this choice ``N1`` points out of region 12, ``N2`` into region 12,
``N3`` out of region 13, and the tangential offsets ``mu = T rho`` keep the
junction concurrent (see :mod:`triflow.graph_map`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import MeshError

log = logging.getLogger(__name__)

MEASURE_FLOOR = 1e-10
COINCIDENCE_TOL = 1e-12
GENERATORS = (
    "theta-network",
    "standard-double-bubble",
    "perturbed-theta-network",
    "perturbed-double-bubble",
)


@dataclass(frozen=True)
class Patch:
    """One oriented patch: vertices, elements and boundary vertex ids."""

    positions: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    orientation: int = 1

    @property
    def n_vertices(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.elements.shape[1] - 1

    def with_positions(self, X):
        return Patch(np.asarray(X, dtype=float), self.elements, self.boundary, self.orientation)

    def flipped(self):
        E = self.elements.copy()
        E[:, [0, 1]] = E[:, [1, 0]]
        return Patch(self.positions, E, self.boundary, self.orientation)

    def adjacency(self):
        """Symmetric vertex adjacency as a CSR boolean matrix."""
        return _adjacency(self.elements, self.n_vertices)

    def oriented_vector_areas(self, X=None):
        X = self.positions if X is None else X
        nvec, meas, _ = kernels.element_geometry(X, self.elements)
        return self.orientation * nvec, meas


@dataclass(frozen=True)
class JunctionTrace:
    """Ordered junction nodes with their per-patch vertex ids."""

    vids: np.ndarray
    coords: np.ndarray
    closed: bool

    @property
    def n_nodes(self):
        return self.vids.shape[0]


@dataclass(frozen=True)
class ClusterMesh:
    """Three patches glued along an explicit junction trace."""

    dim: int
    patches: tuple
    junction: JunctionTrace
    floor: float = MEASURE_FLOOR
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def ambient(self):
        return self.dim + 1

    @property
    def sizes(self):
        return tuple(p.n_vertices for p in self.patches)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def positions(self):
        return [p.positions for p in self.patches]

    def with_positions(self, Xs, meta=None):
        patches = tuple(p.with_positions(X) for p, X in zip(self.patches, Xs))
        return ClusterMesh(self.dim, patches, self.junction, self.floor,
                           dict(self.meta if meta is None else meta))

    def junction_points(self, Xs=None):
        """(J, 3, D) coordinates of each junction node as seen from each patch."""
        Xs = self.positions() if Xs is None else Xs
        return np.stack([Xs[i][self.junction.vids[:, i]] for i in range(3)], axis=1)


@dataclass
class Violation:
    kind: str
    patch: int | None
    index: int | None
    detail: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    def add(self, kind, patch, index, detail):
        self.violations.append(Violation(kind, patch, index, detail))

    @property
    def ok(self):
        return not self.violations

    def kinds(self):
        return sorted({v.kind for v in self.violations})

    def __len__(self):
        return len(self.violations)

    def __str__(self):
        if self.ok:
            return "mesh valid"
        return "\n".join(f"{v.kind}: patch={v.patch} index={v.index} {v.detail}"
                         for v in self.violations)


# ---------------------------------------------------------------------------
# topology helpers


def _adjacency(E, n):
    k = E.shape[1]
    r, c = [], []
    for a in range(k):
        for b in range(k):
            if a != b:
                r.append(E[:, a])
                c.append(E[:, b])
    r = np.concatenate(r)
    c = np.concatenate(c)
    A = sp.csr_matrix((np.ones(len(r), dtype=bool), (r, c)), shape=(n, n))
    A.sum_duplicates()
    return A


def boundary_vertices(E, n):
    """Vertices on the topological boundary of a segment or triangle mesh."""
    E = np.asarray(E)
    if E.shape[1] == 2:
        deg = np.bincount(E.ravel(), minlength=n)
        return np.flatnonzero(deg == 1)
    edges = np.sort(np.concatenate([E[:, [0, 1]], E[:, [1, 2]], E[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return np.unique(uniq[counts == 1].ravel())


def boundary_edges(E):
    """Directed boundary edges of a triangle mesh, following element order."""
    E = np.asarray(E)
    d = np.concatenate([E[:, [0, 1]], E[:, [1, 2]], E[:, [2, 0]]])
    key = np.sort(d, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return d[counts[inv.ravel()] == 1]


def k_ring(A, v, k=2):
    """Vertices within graph distance ``k`` of ``v`` (excluding ``v``)."""
    seen = {int(v)}
    front = {int(v)}
    for _ in range(k):
        nxt = set()
        for u in front:
            nxt.update(A.indices[A.indptr[u]:A.indptr[u + 1]].tolist())
        nxt -= seen
        seen |= nxt
        front = nxt
    seen.discard(int(v))
    return np.array(sorted(seen), dtype=np.int64)


def curve_chain(E, start):
    """Vertex sequence of a segment chain starting at boundary vertex ``start``."""
    E = np.asarray(E)
    n = E.max() + 1
    nbr = [[] for _ in range(n)]
    for a, b in E:
        nbr[a].append(b)
        nbr[b].append(a)
    chain = [int(start)]
    prev = -1
    while True:
        cur = chain[-1]
        nxt = [w for w in nbr[cur] if w != prev]
        if not nxt or len(chain) > n:
            break
        prev = cur
        chain.append(int(nxt[0]))
    return np.array(chain)


# ---------------------------------------------------------------------------
# local fits at junction vertices


def circle_tangent(a, b):
    """Tangent direction at the origin of the circle through 0, ``a``, ``b``.

    Exact for circles and straight lines (inversion about the origin maps the
    circle to a line parallel to its tangent there). Oriented away from ``a``.
    """
    t = b / np.dot(b, b) - a / np.dot(a, a)
    t = t / np.linalg.norm(t)
    return -t if np.dot(t, a) > 0 else t


def circle_curvature_vector(a, b):
    """Curvature vector at the origin of the circle through 0, ``a``, ``b``."""
    M = 2.0 * np.array([a, b])
    rhs = np.array([a @ a, b @ b])
    if abs(np.linalg.det(M)) < 1e-14 * (a @ a) * (b @ b) ** 0.5 * 4:
        return np.zeros_like(a)
    c = np.linalg.solve(M, rhs)
    return c / (c @ c)


def _rot_m90(v):
    return np.array([v[1], -v[0]])


class JunctionGeometry:
    """Conormals, normals and normal curvatures at all junction nodes.

    Attributes
    ----------
    nu, normal : (J, 3, D) arrays; ``normal`` follows patch orientation.
    tangent : (J, 3) junction tangent t (d=1: +-e_z) with (nu1 x nu2).t < 0.
    iinu : (J, 3) second fundamental form II(nu, nu) w.r.t. ``normal``.
    fits : per (node, patch) local fit data for derivative traces.
    """

    def __init__(self, nu, normal, tangent, iinu, fits):
        self.nu = nu
        self.normal = normal
        self.tangent = tangent
        self.iinu = iinu
        self.fits = fits

    def force_balance(self, gamma):
        g = np.asarray(gamma, dtype=float)
        return np.linalg.norm(np.einsum("i,kid->kd", g, self.nu), axis=1)

    def angles(self):
        """(J, 3) angles; column k holds the angle between nu^i, nu^j for (i,j,k) cyclic."""
        out = np.empty((self.nu.shape[0], 3))
        for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            c = np.einsum("kd,kd->k", self.nu[:, i], self.nu[:, j])
            out[:, k] = np.arccos(np.clip(c, -1.0, 1.0))
        return out


class CurveFit:
    """Three-point circle fit at a curve endpoint, used for trace derivatives."""

    def __init__(self, chain, X):
        self.ids = chain[:3]
        P = X[self.ids]
        self.a = P[1] - P[0]
        self.b = P[2] - P[0]
        self.s = np.array([0.0, np.linalg.norm(self.a),
                           np.linalg.norm(self.a) + np.linalg.norm(P[2] - P[1])])

    def outward_derivative(self, f):
        """d f / d nu at the endpoint from the interpolating quadratic in arc length."""
        s = self.s
        v = np.asarray(f)[self.ids]
        # derivative at s=0 of the Lagrange interpolant through (s_k, v_k)
        d = (v[0] * (-(1 / s[1] + 1 / s[2]))
             + v[1] * (s[2] / (s[1] * (s[2] - s[1])))
             - v[2] * (s[1] / (s[2] * (s[2] - s[1]))))
        return -d


class SurfaceFit:
    """Local quadratic least-squares fit of a surface patch around a vertex."""

    def __init__(self, X, v, ring, n0, t):
        self.v = int(v)
        self.ring = ring
        e1 = t - (t @ n0) * n0
        e1 = e1 / np.linalg.norm(e1)
        e2 = np.cross(n0, e1)
        self.frame = (e1, e2, n0)
        D = X[ring] - X[v]
        x, y, z = D @ e1, D @ e2, D @ n0
        self.xy = np.stack([x, y], axis=1)
        A = np.stack([x, y, x * x, x * y, y * y], axis=1)
        self.A = A
        self.pinv = np.linalg.pinv(A)
        c = self.pinv @ z
        self.c = c
        g = np.array([c[0], c[1]])
        n = n0 - c[0] * e1 - c[1] * e2
        self.n = n / np.linalg.norm(n)
        self.hess = np.array([[2 * c[2], c[3]], [c[3], 2 * c[4]]])
        self.wgrad = np.sqrt(1.0 + g @ g)

    def gradient(self, f):
        """Tangential gradient (ambient vector) at the vertex of a scalar field."""
        f = np.asarray(f)
        c = self.pinv @ (f[self.ring] - f[self.v])
        e1, e2, _ = self.frame
        gvec = c[0] * e1 + c[1] * e2
        return gvec - (gvec @ self.n) * self.n

    def second_form(self, w):
        """II(w, w) with respect to the upward fitted normal."""
        e1, e2, _ = self.frame
        q = np.array([w @ e1, w @ e2])
        return float(q @ self.hess @ q) / self.wgrad


def junction_tangents(mesh, Xs=None):
    """Unit tangents of the junction polyline (d=2), exact for circles."""
    Xs = mesh.positions() if Xs is None else Xs
    P = Xs[0][mesh.junction.vids[:, 0]]
    J = P.shape[0]
    T = np.empty_like(P)
    for k in range(J):
        if mesh.junction.closed:
            nxt, prv = P[(k + 1) % J], P[(k - 1) % J]
        else:
            nxt = P[min(k + 1, J - 1)]
            prv = P[max(k - 1, 0)]
        a, b = nxt - P[k], P[k] - prv
        a2, b2 = a @ a, b @ b
        t = a / a2 + b / b2 if a2 > 0 and b2 > 0 else a + b
        T[k] = t / np.linalg.norm(t)
    return T


def _vertex_vector_areas(patch, X):
    nvec, _ = patch.oriented_vector_areas(X)
    return kernels.lump(patch.elements, nvec, patch.n_vertices)


def junction_geometry(mesh, Xs=None):
    """Fitted conormals and normals at all junction nodes of ``mesh``."""
    Xs = mesh.positions() if Xs is None else Xs
    jv = mesh.junction.vids
    J = jv.shape[0]
    D = mesh.ambient
    nu = np.empty((J, 3, D))
    normal = np.empty((J, 3, D))
    iinu = np.empty((J, 3))
    fits = [[None] * 3 for _ in range(J)]
    if mesh.dim == 1:
        for i, p in enumerate(mesh.patches):
            X = Xs[i]
            for k in range(J):
                v = jv[k, i]
                chain = _chain_from(p, v)
                if len(chain) < 3:
                    raise MeshError(f"patch {i}: fewer than 3 vertices behind junction node {k}")
                fit = CurveFit(chain, X)
                a, b = fit.a, fit.b
                if min(np.linalg.norm(a), np.linalg.norm(b)) < mesh.floor:
                    raise MeshError(f"patch {i}: degenerate boundary element at node {k}")
                tv = circle_tangent(a, b)
                nu[k, i] = tv
                # patch normal from element orientation
                E = p.elements
                e = np.flatnonzero((E[:, 0] == v) | (E[:, 1] == v))[0]
                seg = X[E[e, 1]] - X[E[e, 0]]
                n_el = p.orientation * np.array([seg[1], -seg[0]])
                nn = _rot_m90(tv)
                normal[k, i] = nn if nn @ n_el > 0 else -nn
                kv = circle_curvature_vector(a, b)
                iinu[k, i] = kv @ normal[k, i]
                fits[k][i] = fit
        tangent = np.empty((J, 3))
        for k in range(J):
            z = nu[k, 0, 0] * nu[k, 1, 1] - nu[k, 0, 1] * nu[k, 1, 0]
            tangent[k] = [0.0, 0.0, -np.sign(z) if z != 0 else 1.0]
        return JunctionGeometry(nu, normal, tangent, iinu, fits)

    tS = junction_tangents(mesh, Xs)
    for i, p in enumerate(mesh.patches):
        X = Xs[i]
        A = p.adjacency()
        g = _vertex_vector_areas(p, X)
        for k in range(J):
            v = jv[k, i]
            n0 = g[v] / np.linalg.norm(g[v])
            ring = k_ring(A, v, 2)
            if len(ring) < 5:
                ring = k_ring(A, v, 3)
            fit = SurfaceFit(X, v, ring, n0, tS[k])
            n = fit.n
            nv = np.cross(tS[k], n)
            nv /= np.linalg.norm(nv)
            inward = (X[ring] - X[v]).mean(axis=0)
            if nv @ inward > 0:
                nv = -nv
            nu[k, i] = nv
            normal[k, i] = n
            iinu[k, i] = fit.second_form(nv)
            fits[k][i] = fit
    tangent = np.empty((J, 3))
    for k in range(J):
        c = np.cross(nu[k, 0], nu[k, 1])
        s = -np.sign(c @ tS[k]) if c @ tS[k] != 0 else 1.0
        tangent[k] = s * tS[k]
    return JunctionGeometry(nu, normal, tangent, iinu, fits)


def _chain_from(patch, v):
    cache = patch.__dict__.setdefault("_chains", {})
    if v not in cache:
        cache[v] = curve_chain(patch.elements, v)
    return cache[v]


def junction_conormals(mesh, node, Xs=None):
    """Outward unit conormals (3, D) of the three patches at one junction node."""
    if not 0 <= node < mesh.junction.n_nodes:
        raise MeshError(f"invalid junction node id {node}")
    return junction_geometry(mesh, Xs).nu[node].copy()


# ---------------------------------------------------------------------------
# volumes and energy


def patch_flux(patch, X=None):
    """Sum over elements of centroid . (oriented vector area)."""
    X = patch.positions if X is None else X
    nvec, _ = patch.oriented_vector_areas(X)
    xc = X[patch.elements].mean(axis=1)
    return float(np.einsum("ij,ij->", xc, nvec))


def enclosed_volumes(mesh, Xs=None):
    """Signed volumes (area for d=1) of regions 12 and 13 by the divergence theorem."""
    Xs = mesh.positions() if Xs is None else Xs
    S = [patch_flux(p, X) for p, X in zip(mesh.patches, Xs)]
    c = 1.0 / (mesh.dim + 1)
    return c * (S[0] - S[1]), c * (S[2] - S[0])


def surface_energy(mesh, gamma, Xs=None):
    Xs = mesh.positions() if Xs is None else Xs
    tot = 0.0
    for g, p, X in zip(gamma, mesh.patches, Xs):
        _, meas = p.oriented_vector_areas(X)
        tot += g * meas.sum()
    return float(tot)


# ---------------------------------------------------------------------------
# validation


def validate_mesh(mesh):
    """Check every ClusterMesh invariant; returns a :class:`ValidationReport`."""
    rep = ValidationReport()
    jv = mesh.junction.vids
    if jv.ndim != 2 or jv.shape[1] != 3:
        rep.add("junction-table", None, None, "junction table must have three columns")
        return rep
    for i, p in enumerate(mesh.patches):
        if p.elements.shape[1] != mesh.dim + 1:
            rep.add("element-arity", i, None, "element arity does not match dim")
            continue
        bnd = set(boundary_vertices(p.elements, p.n_vertices).tolist())
        refs = jv[:, i].tolist()
        counts = {}
        for r in refs:
            counts[r] = counts.get(r, 0) + 1
        for k, r in enumerate(refs):
            if r not in bnd:
                rep.add("junction-not-boundary", i, k, f"vertex {r} is interior")
            if counts[r] > 1:
                rep.add("junction-duplicate", i, k, f"vertex {r} used by several nodes")
        for b in sorted(bnd - set(refs)):
            rep.add("boundary-unmatched", i, b, "boundary vertex belongs to no junction node")
        _, meas, _ = kernels.element_geometry(p.positions, p.elements)
        for e in np.flatnonzero(meas < mesh.floor):
            rep.add("degenerate-element", i, int(e), f"measure {meas[e]:.3e}")
        _orientation_consistency(rep, i, p)
    P = mesh.junction_points()
    for k in range(P.shape[0]):
        for i in (1, 2):
            d = np.abs(P[k, i] - P[k, 0]).max()
            if d > COINCIDENCE_TOL:
                rep.add("junction-coincidence", i, k, f"offset {d:.3e} from patch 0")
    c = mesh.junction.coords
    if len(c) > 1 and np.any(np.diff(c) <= 0):
        rep.add("junction-coords", None, None, "junction coordinates not increasing")
    if rep.ok:
        _orientation_convention(rep, mesh)
    return rep


def _orientation_consistency(rep, i, p):
    E = p.elements
    if E.shape[1] == 2:
        out_deg = np.bincount(E[:, 0], minlength=p.n_vertices)
        in_deg = np.bincount(E[:, 1], minlength=p.n_vertices)
        bad = np.flatnonzero((out_deg > 1) | (in_deg > 1))
        for v in bad:
            rep.add("orientation", i, int(v), "segment directions inconsistent")
        return
    d = np.concatenate([E[:, [0, 1]], E[:, [1, 2]], E[:, [2, 0]]])
    elem = np.tile(np.arange(len(E)), 3)
    _, idx, counts = np.unique(d, axis=0, return_index=True, return_counts=True)
    for j in np.flatnonzero(counts > 1):
        rep.add("orientation", i, int(elem[idx[j]]), "directed edge used twice")


def _orientation_convention(rep, mesh):
    try:
        geo = junction_geometry(mesh)
    except (MeshError, np.linalg.LinAlgError) as exc:
        rep.add("conormal", None, None, str(exc))
        return
    for k in range(geo.nu.shape[0]):
        t = geo.tangent[k]
        for i in range(3):
            nu = geo.nu[k, i]
            want = np.cross(np.append(nu, 0.0), t)[:2] if mesh.dim == 1 else np.cross(nu, t)
            if want @ geo.normal[k, i] < 0:
                rep.add("orientation-convention", i, k, "normal violates N = nu x t")
    v12, v13 = enclosed_volumes(mesh)
    if v12 <= 0 or v13 <= 0:
        rep.add("orientation-convention", None, None, f"region volumes {v12:.3e}, {v13:.3e}")


# ---------------------------------------------------------------------------
# generators


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if g.shape != (3,) or np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise MeshError(f"surface tensions must be three positive numbers, got {gamma}")
    return g


def _young_star(gamma, alpha=np.pi / 2):
    """Unit conormals at the upper junction, nu1 at angle ``alpha``, clockwise order."""
    from .graph_map import young_angles

    th = young_angles(gamma)
    a1 = alpha
    a2 = a1 - th[2]
    a3 = a2 - th[0]
    return np.array([[np.cos(a), np.sin(a)] for a in (a1, a2, a3)])


def _arc_points(P, Q, d, n):
    """n+1 points on the circular (or straight) arc from Q to P leaving P along d."""
    if abs(d[0]) < 1e-14:
        s = np.linspace(0.0, 1.0, n + 1)
        return Q[None, :] + s[:, None] * (P - Q)[None, :]
    a = P[1]
    cx = a * d[1] / d[0]
    c = np.array([cx, 0.0])
    R = np.hypot(cx, a)
    phiP = np.arctan2(P[1] - c[1], P[0] - c[0])
    phiQ = np.arctan2(Q[1] - c[1], Q[0] - c[0])
    # rotation sense at P matching the leaving direction d
    tang_ccw = np.array([-np.sin(phiP), np.cos(phiP)])
    sense = 1.0 if tang_ccw @ d > 0 else -1.0
    # travel from P in direction `sense` until Q
    dphi = (phiQ - phiP) * sense % (2 * np.pi)
    phis = phiP + sense * dphi * np.linspace(1.0, 0.0, n + 1)
    pts = c[None, :] + R * np.stack([np.cos(phis), np.sin(phis)], axis=1)
    pts[0] = Q
    pts[-1] = P
    return pts


def theta_network(gamma=(1.0, 1.0, 1.0), n=64, half_height=0.75):
    """Three circular arcs from Q=(0,-a) to P=(0,a) meeting at Young angles.

    Patch 0 is the middle curve, patch 1 the left arc, patch 2 the right arc.
    The angle star is fixed with the middle conormal vertical at P, so the
    middle curve is straight and the arcs satisfy the curvature balance.
    """
    g = _check_gamma(gamma)
    n = int(n)
    if n < 3:
        raise MeshError(f"resolution {n} below the floor of 3 elements per patch")
    a = float(half_height)
    P = np.array([0.0, a])
    Q = np.array([0.0, -a])
    nu = _young_star(g)
    patches = []
    for i in range(3):
        pts = _arc_points(P, Q, -nu[i], n)
        E = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        patches.append(Patch(pts, E, np.array([0, n])))
    vids = np.array([[0, 0, 0], [n, n, n]])
    mesh = ClusterMesh(1, tuple(patches), JunctionTrace(vids, np.array([0.0, 1.0]), False),
                       meta={"generator": "theta-network", "gamma": g.tolist(), "resolution": n})
    return _orient(mesh)


def ring_patch(rims, counts, mapper):
    """Pole-and-rings triangulation of a topological disk.

    ``rims[k]`` is the radial parameter in (0, 1] of ring ``k`` (last = 1),
    ``counts[k]`` its vertex count and ``mapper(s, phi)`` the embedding of the
    parameter point. Consecutive rings are zipped by angle.
    """
    pts = [mapper(np.array([0.0]), np.array([0.0]))[0]]
    rings = [np.array([0])]
    nid = 1
    for k, (s, m) in enumerate(zip(rims, counts)):
        off = 0.0 if k == len(rims) - 1 else 0.5 * (k % 2)
        phi = 2 * np.pi * (np.arange(m) + off) / m
        pts.extend(mapper(np.full(m, s), phi))
        rings.append(np.arange(nid, nid + m))
        nid += m
    angs = [np.array([0.0])]
    for k, (s, m) in enumerate(zip(rims, counts)):
        off = 0.0 if k == len(rims) - 1 else 0.5 * (k % 2)
        angs.append(2 * np.pi * (np.arange(m) + off) / m)
    tris = []
    for r in range(len(rings) - 1):
        A, B = rings[r], rings[r + 1]
        if len(A) == 1:
            for j in range(len(B)):
                tris.append((A[0], B[j], B[(j + 1) % len(B)]))
            continue
        tris.extend(_zip_rings(A, angs[r], B, angs[r + 1]))
    rim = rings[-1]
    return np.array(pts), np.array(tris, dtype=np.int64), rim


def _zip_rings(A, aA, B, aB):
    """Triangulate the annulus between two closed rings ordered by angle."""
    nA, nB = len(A), len(B)
    tA = np.append(aA, aA[0] + 2 * np.pi)
    tB = np.append(aB, aB[0] + 2 * np.pi)
    i = j = 0
    out = []
    while i < nA or j < nB:
        if j < nB and (i >= nA or tB[j + 1] <= tA[i + 1]):
            out.append((A[i % nA], B[j], B[(j + 1) % nB]))
            j += 1
        else:
            out.append((A[i], B[j % nB], A[(i + 1) % nA]))
            i += 1
    return out


def _sphere_cap_mapper(center_z, R, psi_max, pole_sign):
    def m(s, phi):
        psi = psi_max * s
        r = R * np.sin(psi)
        z = center_z + pole_sign * R * np.cos(psi)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)

    return m


def double_bubble(gamma=(1.0, 1.0, 1.0), n=36, rim_radius=np.sqrt(3) / 2):
    """Flat disk plus two spherical caps meeting along a circle at Young angles.

    Patch 0 is the disk, patch 1 and patch 2 the caps. For ``gamma2 == gamma3``
    this is the equal-volume standard double bubble (unit caps for the default
    rim radius and equal tensions). ``n`` is the number of junction nodes.
    """
    g = _check_gamma(gamma)
    n = int(n)
    if n < 3:
        raise MeshError(f"resolution {n} below the floor of 3 elements per patch")
    rj = float(rim_radius)
    h = 2 * np.pi * rj / n
    nu2d = _young_star(g, alpha=0.0)  # (r, z) components, disk conormal = e_r
    patches = []
    for i in range(3):
        if i == 0:
            K = max(1, int(round(rj / h)))
            rims = np.arange(1, K + 1) / K
            counts = [max(6, int(round(n * s))) for s in rims[:-1]] + [n]

            def mapper(s, phi):
                return np.stack([rj * s * np.cos(phi), rj * s * np.sin(phi), 0 * s], axis=1)
        else:
            nr, nz = nu2d[i]
            if abs(nz) < 1e-12:
                raise MeshError("cap conormal is horizontal; no spherical cap exists")
            zc = nr * rj / nz
            R = np.hypot(rj, zc)
            up = -nz > 0  # the cap leaves the rim along -nu
            pole_sign = 1.0 if up else -1.0
            # polar angle of the rim measured from the far pole
            psi_max = np.arccos(np.clip(pole_sign * (0.0 - zc) / R, -1, 1))
            K = max(1, int(round(R * psi_max / h)))
            rims = np.arange(1, K + 1) / K
            counts = [max(6, int(round(2 * np.pi * R * np.sin(psi_max * s) / h)))
                      for s in rims[:-1]] + [n]
            mapper = _sphere_cap_mapper(zc, R, psi_max, pole_sign)
        X, T, rim = ring_patch(rims, counts, mapper)
        phi = 2 * np.pi * np.arange(n) / n
        X[rim] = np.stack([rj * np.cos(phi), rj * np.sin(phi), np.zeros(n)], axis=1)
        patches.append((Patch(X, T, rim.copy()), rim))
    vids = np.stack([r for _, r in patches], axis=1)
    P = patches[0][0].positions[vids[:, 0]]
    seg = np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1)
    coords = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    mesh = ClusterMesh(2, tuple(p for p, _ in patches), JunctionTrace(vids, coords, True),
                       meta={"generator": "standard-double-bubble", "gamma": g.tolist(),
                             "resolution": n})
    return _orient(mesh)


def _orient(mesh):
    """Flip element order per patch so normals satisfy N^i = nu^i x t."""
    geo = junction_geometry(mesh)
    t = geo.tangent[0]
    patches = list(mesh.patches)
    for i in range(3):
        nu = geo.nu[0, i]
        want = np.cross(np.append(nu, 0.0), t)[:2] if mesh.dim == 1 else np.cross(nu, t)
        if want @ geo.normal[0, i] < 0:
            patches[i] = patches[i].flipped()
    return ClusterMesh(mesh.dim, tuple(patches), mesh.junction, mesh.floor, dict(mesh.meta))


@dataclass
class ClusterSpec:
    """Generator request: name, tensions, resolution and perturbation data."""

    generator: str
    gamma: tuple = (1.0, 1.0, 1.0)
    resolution: int = 0
    amplitude: float = 0.05
    seed: int = 0
    degree: int = 3
    triangles: int = 0


def build_reference_cluster(spec):
    """Build a cluster from a :class:`ClusterSpec` (or an equivalent dict)."""
    if isinstance(spec, dict):
        spec = ClusterSpec(**spec)
    name = spec.generator
    if name not in GENERATORS:
        raise MeshError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")
    _check_gamma(spec.gamma)
    if name.endswith("theta-network"):
        mesh = theta_network(spec.gamma, spec.resolution or 64)
    elif spec.triangles:
        mesh = double_bubble_for_triangles(spec.gamma, spec.triangles)
    else:
        mesh = double_bubble(spec.gamma, spec.resolution or 36)
    if name.startswith("perturbed-"):
        from .graph_map import perturb_cluster

        mesh = perturb_cluster(mesh, spec.gamma, spec.amplitude, spec.seed,
                               keep_junction=(mesh.dim == 1), degree=spec.degree)
        mesh.meta["generator"] = name
    return mesh


def from_arrays(dim, patch_data, junction_vids, floor=MEASURE_FLOOR):
    """Assemble a cluster from raw (positions, elements) pairs and a node table."""
    if len(patch_data) != 3:
        raise MeshError("a cluster needs exactly three patches")
    patches = []
    for X, E in patch_data:
        X = np.asarray(X, dtype=float)
        E = np.asarray(E, dtype=np.int64)
        patches.append(Patch(X, E, boundary_vertices(E, len(X))))
    vids = np.asarray(junction_vids, dtype=np.int64).reshape(-1, 3)
    closed = dim == 2
    if closed:
        P = patches[0].positions[vids[:, 0]]
        seg = np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1)
        coords = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    else:
        coords = np.arange(len(vids), dtype=float)
    return ClusterMesh(dim, tuple(patches), JunctionTrace(vids, coords, closed), floor)


def double_bubble_for_triangles(gamma=(1.0, 1.0, 1.0), target=2000):
    """Double bubble whose total triangle count is close to ``target``."""
    n = 36
    mesh = double_bubble(gamma, n)
    count = sum(len(p.elements) for p in mesh.patches)
    n = max(3, int(round(n * np.sqrt(target / count))))
    return double_bubble(gamma, n)


# ---------------------------------------------------------------------------
# single-patch probes (closed curves, spheres, disks)


def circle_curve(n=256, radius=1.0, inward=False):
    """Closed counter-clockwise polygon inscribed in a circle."""
    s = 2 * np.pi * np.arange(n) / n
    X = radius * np.stack([np.cos(s), np.sin(s)], axis=1)
    E = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return Patch(X, E, np.zeros(0, dtype=np.int64), -1 if inward else 1)


def flat_disk(n=36, radius=1.0):
    """Planar disk in z = 0 with ``n`` rim vertices and upward normal."""
    h = 2 * np.pi * radius / n
    K = max(1, int(round(radius / h)))
    rims = np.arange(1, K + 1) / K
    counts = [max(6, int(round(n * s))) for s in rims[:-1]] + [n]

    def mapper(s, phi):
        return np.stack([radius * s * np.cos(phi), radius * s * np.sin(phi), 0 * s], axis=1)

    X, T, rim = ring_patch(rims, counts, mapper)
    return Patch(X, T, np.sort(rim))


def sphere_cap(n=36, radius=1.0, psi_max=np.pi / 2):
    """Spherical cap around the north pole with ``n`` rim vertices, outward normal."""
    h = 2 * np.pi * radius * np.sin(psi_max) / n
    K = max(1, int(round(radius * psi_max / h)))
    rims = np.arange(1, K + 1) / K
    counts = [max(6, int(round(2 * np.pi * radius * np.sin(psi_max * s) / h)))
              for s in rims[:-1]] + [n]
    X, T, rim = ring_patch(rims, counts, _sphere_cap_mapper(0.0, radius, psi_max, 1.0))
    return Patch(X, T, np.sort(rim))


def sphere_surface(n=48, radius=1.0, inward=False):
    """Closed sphere glued from two hemispherical ring meshes."""
    up = sphere_cap(n, radius)
    X, T = up.positions, up.elements
    rim = np.flatnonzero(np.isin(np.arange(len(X)), up.boundary))
    m = len(X)
    Xl = X.copy()
    Xl[:, 2] *= -1
    idx = np.arange(m) + m
    idx[rim] = rim
    keep = np.setdiff1d(np.arange(m), rim)
    newid = np.empty(m, dtype=np.int64)
    newid[rim] = rim
    newid[keep] = m + np.arange(len(keep))
    Tl = newid[T][:, [0, 2, 1]]
    Xall = np.concatenate([X, Xl[keep]])
    Tall = np.concatenate([T, Tl])
    return Patch(Xall, Tall, np.zeros(0, dtype=np.int64), -1 if inward else 1)


# ---------------------------------------------------------------------------
# OFF input and output


def write_off(path, X, E):
    """Write one patch as an OFF file (curves padded to z = 0)."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 2:
        X = np.column_stack([X, np.zeros(len(X))])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"OFF\n{len(X)} {len(E)} 0\n")
        for row in X:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        for e in E:
            fh.write(f"{len(e)} " + " ".join(str(int(v)) for v in e) + "\n")


def read_off(path):
    """(positions (n, 3), elements (m, k)) of an OFF file; all faces must share k."""
    with open(path, encoding="utf-8") as fh:
        toks = [ln.split("#", 1)[0].split() for ln in fh]
    toks = [t for t in toks if t]
    if not toks or toks[0][0] != "OFF":
        raise MeshError(f"{path}: missing OFF header")
    head = toks[0][1:] if len(toks[0]) > 1 else toks[1]
    start = 1 if len(toks[0]) > 1 else 2
    nv, nf = int(head[0]), int(head[1])
    X = np.array([[float(v) for v in t[:3]] for t in toks[start:start + nv]])
    faces = [t for t in toks[start + nv:start + nv + nf]]
    if len(X) != nv or len(faces) != nf:
        raise MeshError(f"{path}: truncated OFF file")
    k = {int(f[0]) for f in faces}
    if len(k) != 1:
        raise MeshError(f"{path}: mixed face arities {sorted(k)}")
    E = np.array([[int(v) for v in f[1:]] for f in faces], dtype=np.int64)
    return X, E


def save_off_cluster(mesh, directory):
    """Write ``patch0.off``..``patch2.off`` and ``junction.txt`` into ``directory``."""
    import os

    os.makedirs(directory, exist_ok=True)
    for i, p in enumerate(mesh.patches):
        write_off(os.path.join(directory, f"patch{i}.off"), p.positions, p.elements)
    with open(os.path.join(directory, "junction.txt"), "w", encoding="utf-8") as fh:
        for k, row in enumerate(mesh.junction.vids):
            fh.write(f"{k} {row[0]} {row[1]} {row[2]}\n")


def load_off_cluster(directory, dim=None):
    """Read a cluster written by :func:`save_off_cluster`.

    Segments (two vertices per face) give a curve cluster in the plane.
    """
    import os

    data = []
    for i in range(3):
        X, E = read_off(os.path.join(directory, f"patch{i}.off"))
        data.append((X, E))
    d = data[0][1].shape[1] - 1 if dim is None else int(dim)
    if d == 1:
        data = [(X[:, :2], E) for X, E in data]
    rows = np.loadtxt(os.path.join(directory, "junction.txt"), dtype=np.int64, ndmin=2)
    if rows.shape[1] != 4:
        raise MeshError("junction table lines must read 'node v0 v1 v2'")
    rows = rows[np.argsort(rows[:, 0])]
    return from_arrays(d, data, rows[:, 1:])
