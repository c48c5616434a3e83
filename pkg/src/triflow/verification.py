"""Numerical checks of the analytic ingredients behind the flow.

* finite-difference confirmation of the first variations of normal velocity,
  mean curvature and junction normal products;
* the half-line ODE (Lopatinskii-Shapiro) test of the highest-order junction
  operators;
* geometric versus reference-frame compatibility checks of initial data.
"""
from __future__ import annotations

import cmath
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cluster_mesh import MEASURE_FLOOR, ClusterMesh, junction_geometry
from .diffgeo import (build_geometry, cluster_geometry, element_gradients, extrapolated_trace,
                      laplace_beltrami, surface_gradient_normal_trace)
from .errors import FoldOverError, ProbeError
from .graph_map import (apply_graph, build_tangential_frame, check_fold_over,
                        displacement, junction_trace, mu_from_rho, young_angles)

log = logging.getLogger(__name__)

QUANTITIES = ("V", "H", "normal-product")
LAMBDA_GRID = (0.0, 1.0, 10.0, 1j, 10j, 1 + 1j)
ZETA_GRID = (0.0, 0.5, 1.0, 4.0)
GAMMA_GRID = ((1.0, 1.0, 1.0), (1.0, 1.0, 1.5), (2.0, 1.0, 1.2))
PAIRS = ((1, 2, 0), (2, 0, 1), (0, 1, 2))


# ---------------------------------------------------------------------------
# finite-difference linearization checks


@dataclass
class FDTable:
    """Central differences of one quantity along an epsilon ladder."""

    which: str
    eps: np.ndarray
    fd: list
    formula: np.ndarray
    differences: np.ndarray
    orders: np.ndarray
    formula_error: float

    @property
    def asymptotic_order(self):
        """Observed order on the finest segments of the ladder."""
        o = self.orders[np.isfinite(self.orders)]
        return float(np.median(o[-2:])) if len(o) else np.nan

    def rows(self):
        out = []
        for k, e in enumerate(self.eps):
            d = self.differences[k - 1] if k else np.nan
            o = self.orders[k - 2] if k >= 2 else np.nan
            out.append((float(e), float(np.abs(self.fd[k] - self.formula).max()), float(d),
                        float(o)))
        return out


class _Probe:
    """Deformation ``eps -> X(eps)`` of a single patch or a cluster."""

    def __init__(self, target, u, gamma):
        self.target = target
        self.gamma = np.asarray(gamma, dtype=float)
        if isinstance(target, ClusterMesh):
            self.frame = build_tangential_frame(target, gamma)
            self.u = [np.asarray(x, dtype=float) for x in u]
            self.mu = mu_from_rho(self.frame, self.frame.T, junction_trace(target, self.u))
            self.normals = self.frame.normal
            self.caches, self.geo = cluster_geometry(target)
        else:
            c = build_geometry(target)
            self.frame = None
            self.u = [np.asarray(u, dtype=float)]
            self.mu = [np.zeros(target.n_vertices)]
            self.normals = [c.normal]
            self.caches, self.geo = [c], None

    @property
    def patches(self):
        t = self.target
        return list(t.patches) if isinstance(t, ClusterMesh) else [t]

    def positions(self, eps, field=None):
        field = self.u if field is None else field
        if self.frame is not None:
            return apply_graph(self.target, self.frame, [eps * f for f in field])
        X = self.target.positions + eps * field[0][:, None] * self.normals[0]
        n0, _, _ = kernels.element_geometry(self.target.positions, self.target.elements)
        n1, meas, _ = kernels.element_geometry(X, self.target.elements)
        if np.any(meas < MEASURE_FLOOR) or np.any(np.einsum("ij,ij->i", n0, n1) <= 0):
            raise FoldOverError("fold-over in single-patch probe")
        return [X]

    def velocity(self, udot):
        if self.frame is not None:
            return displacement(self.frame, udot, self.target)
        return [udot[0][:, None] * self.normals[0]]

    def caches_at(self, eps):
        Xs = self.positions(eps)
        if self.frame is not None:
            return cluster_geometry(self.target.with_positions(Xs))
        return [build_geometry(self.target, Xs[0])], None


def _interior_mask(patch):
    m = np.ones(patch.n_vertices, dtype=bool)
    m[patch.boundary] = False
    return m


def _vertex_gradients(cache, f):
    g = element_gradients(cache, f)
    out = np.zeros((cache.n_vertices, g.shape[1]))
    w = np.zeros(cache.n_vertices)
    for a in range(cache.elements.shape[1]):
        np.add.at(out, cache.elements[:, a], g * cache.measure[:, None])
        np.add.at(w, cache.elements[:, a], cache.measure)
    return out / w[:, None]


def _quantity(probe, which, eps, udot):
    if which == "H":
        caches, _ = probe.caches_at(eps)
        return np.concatenate([c.H[_interior_mask(p)] for c, p in zip(caches, probe.patches)])
    if which == "V":
        # rho(t) = eps (u + t udot); the graph map is affine in rho, so the
        # path velocity is eps times the displacement of udot
        caches, _ = probe.caches_at(eps)
        return np.concatenate([eps * np.einsum("ij,ij->i", a, c.normal)
                               for a, c in zip(probe.velocity(udot), caches)])
    if which == "normal-product":
        if probe.frame is None:
            raise ValueError("normal products need a cluster probe")
        Xs = probe.positions(eps)
        geo = junction_geometry(probe.target, Xs)
        out = np.empty((geo.normal.shape[0], 3))
        for i, j, k in PAIRS:
            out[:, k] = np.einsum("kd,kd->k", geo.normal[:, i], geo.normal[:, j])
        return out.ravel()
    raise ValueError(f"unknown quantity {which!r}; choose from {QUANTITIES}")


def linearization_formula(probe, which, udot):
    """First variation at the reference predicted by the closed-form expressions."""
    if which == "V":
        # normal speed equals the normal part of the time derivative of rho
        return np.concatenate([d for d in udot])
    if which == "H":
        out = []
        for c, p, u, mu, i in zip(probe.caches, probe.patches, probe.u, probe.mu,
                                  range(len(probe.u))):
            val = laplace_beltrami(c, u) + c.II2 * u
            if probe.frame is not None:
                gH = _vertex_gradients(c, c.H)
                val = val + mu * np.einsum("ij,ij->i", gH, probe.frame.tau[i])
            out.append(val[_interior_mask(p)])
        return np.concatenate(out)
    if which == "normal-product":
        mesh = probe.target
        geo = probe.geo
        jv = mesh.junction.vids
        phi = junction_trace(mesh, probe.mu)
        dnu = np.stack([surface_gradient_normal_trace(
            probe.caches[i], probe.u[i], jv[:, i], geo.nu[:, i], method="fit")
            for i in range(3)], axis=1)
        a = dnu + geo.iinu * phi
        out = np.empty((jv.shape[0], 3))
        for i, j, k in PAIRS:
            sij = -np.einsum("kd,kd->k", geo.nu[:, i], geo.normal[:, j])
            sji = -np.einsum("kd,kd->k", geo.nu[:, j], geo.normal[:, i])
            out[:, k] = sij * a[:, i] + sji * a[:, j]
        return out.ravel()
    raise ValueError(f"unknown quantity {which!r}; choose from {QUANTITIES}")


def fd_check_linearization(which, target, u, eps=None, gamma=(1.0, 1.0, 1.0), udot=None):
    """Central differences of ``which`` along ``u`` versus the linearization formula.

    ``target`` is a single :class:`Patch` (normal offsets only) or a
    :class:`ClusterMesh` (graph map with slaved tangential offsets, ``u`` a
    list of per-patch fields with admissible junction trace). The observed
    order compares consecutive central differences, so it measures the
    ladder's convergence independently of the spatial discretization error.
    """
    if which not in QUANTITIES:
        raise ValueError(f"unknown quantity {which!r}; choose from {QUANTITIES}")
    probe = _Probe(target, u, gamma)
    if udot is None:
        udot = probe.u
    udot = [np.asarray(x, dtype=float) for x in (udot if isinstance(udot, (list, tuple))
                                                  else [udot])]
    if eps is None:
        eps = 0.02 / max(np.abs(np.concatenate(probe.u)).max(), 1e-300) * 0.5 ** np.arange(5)
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("epsilon ladder must be positive and decreasing")
    fd = []
    for e in eps:
        try:
            qp = _quantity(probe, which, e, udot)
            qm = _quantity(probe, which, -e, udot)
        except FoldOverError as exc:
            raise FoldOverError(f"fold-over at eps={e:.3g}; shrink the ladder ({exc})") from exc
        fd.append((qp - qm) / (2 * e))
    formula = linearization_formula(probe, which, udot)
    diffs = np.array([np.abs(fd[k] - fd[k + 1]).max() for k in range(len(eps) - 1)])
    ratio_e = eps[:-1] / eps[1:]
    orders = np.array([np.log(diffs[k] / diffs[k + 1]) / np.log(ratio_e[k])
                       if diffs[k + 1] > 0 and diffs[k] > 0 else np.nan
                       for k in range(len(diffs) - 1)])
    ferr = float(np.abs(fd[-1] - formula).max())
    return FDTable(which, eps, fd, formula, diffs, orders, ferr)


# ---------------------------------------------------------------------------
# Lopatinskii-Shapiro probes


@dataclass
class LopatinskiiProbe:
    """One point of the half-line ODE test with its boundary matrix."""

    lam: complex
    zeta: float
    gamma: tuple
    norms: np.ndarray
    matrix: np.ndarray = field(repr=False)
    min_sv: float


def decaying_roots(lam, zeta_norm, tol=1e-12):
    """Principal fourth root of ``-(lam + |zeta|^4)`` rotated to the two with Re < 0."""
    c = -(complex(lam) + zeta_norm ** 4)
    if abs(c) < tol:
        raise ProbeError("the probe (lambda, zeta) = (0, 0) is excluded")
    if complex(lam).real < 0:
        raise ProbeError("lambda must have non-negative real part")
    r0 = cmath.exp(cmath.log(c) / 4)
    roots = [r0 * 1j ** k for k in range(4)]
    if min(abs(r.real) for r in roots) < tol * abs(r0):
        raise ProbeError("purely oscillatory exponent; probe at the excluded point")
    neg = [r for r in roots if r.real < 0]
    if len(neg) != 2:
        raise ProbeError("could not select two decaying exponents")
    return np.array(neg)


def boundary_matrix(gamma, norms, lam):
    """6x6 matrix of the junction rows acting on the decaying exponentials."""
    g = np.asarray(gamma, dtype=float)
    z = np.broadcast_to(np.asarray(norms, dtype=float), (3,))
    # derivative orders 0..3 of exp(w y) at y = 0 for the six basis functions
    W = np.concatenate([decaying_roots(lam, z[i]) for i in range(3)])
    P = np.vander(W, 4, increasing=True).T  # (4, 6): row q is w^q
    patch = np.repeat(np.arange(3), 2)
    zz = z[patch] ** 2
    gg = g[patch]
    sel = np.eye(3)[patch].T  # (3, 6) patch indicator
    rows = [
        gg * P[0],
        (sel[0] - sel[1]) * P[1],
        (sel[1] - sel[2]) * P[1],
        gg * (zz * P[0] - P[2]),
        (sel[0] - sel[1]) * (P[3] - zz * P[1]),
        (sel[1] - sel[2]) * (P[3] - zz * P[1]),
    ]
    return np.array(rows)


def lopatinskii_min_sv(gamma, norms, lam):
    """Smallest singular value of the boundary matrix at one probe point."""
    return float(np.linalg.svd(boundary_matrix(gamma, norms, lam), compute_uv=False)[-1])


def lopatinskii_probe(gamma, lam, zeta, metric=(1.0, 1.0, 1.0)):
    """Build a probe for frequency ``zeta`` with per-patch metric factors."""
    norms = abs(float(zeta)) * np.asarray(metric, dtype=float)
    A = boundary_matrix(gamma, norms, lam)
    sv = float(np.linalg.svd(A, compute_uv=False)[-1])
    return LopatinskiiProbe(complex(lam), float(zeta), tuple(gamma), norms, A, sv)


def junction_metric_factors(mesh):
    """Per-patch factors |zeta|_g / |zeta| at the junction, one row per node.

    In boundary-adapted coordinates (unit conormal direction, junction arc
    length along Sigma) the tangential metric coefficient is the squared
    speed of the shared junction parametrization, so all three patches get
    the same factor. It is returned per patch for generality.
    """
    if mesh.dim != 2:
        return np.ones((mesh.junction.n_nodes, 3))
    P = mesh.positions()[0][mesh.junction.vids[:, 0]]
    seg = np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1)
    h = 0.5 * (seg + np.roll(seg, 1))
    f = h.mean() / h
    return np.repeat(f[:, None], 3, axis=1)


def lopatinskii_sweep(gammas=GAMMA_GRID, lams=LAMBDA_GRID, zetas=ZETA_GRID, metrics=None):
    """All probes of the grid, skipping the excluded point (0, 0)."""
    metrics = [(1.0, 1.0, 1.0)] if metrics is None else metrics
    out = []
    for g in gammas:
        for m in metrics:
            for lam in lams:
                for z in zetas:
                    if abs(complex(lam)) == 0 and z == 0:
                        continue
                    out.append(lopatinskii_probe(g, lam, z, m))
    return out


# ---------------------------------------------------------------------------
# compatibility of initial data


@dataclass
class CompatibilityReport:
    """Per-condition maximal residuals and the verdict at given tolerances."""

    kind: str
    residuals: dict
    tolerances: dict

    @property
    def passed(self):
        return all(self.residuals[k] <= self.tolerances[k] for k in self.residuals)

    @property
    def failed_conditions(self):
        return [k for k in self.residuals if self.residuals[k] > self.tolerances[k]]

    def __str__(self):
        body = ", ".join(f"{k}={v:.3e}" for k, v in self.residuals.items())
        return f"{self.kind}: {'pass' if self.passed else 'fail'} ({body})"


@dataclass
class CompatibilityTolerances:
    """Thresholds shared by both checks; cosine tolerances follow from angles."""

    concurrency: float = 1e-10
    angle: float = 1e-2
    ccp: float = 5e-2
    flux: float = 0.5
    lap: float = 2.0

    def gcc(self):
        return {"CC": self.concurrency, "AC": self.angle, "CCP": self.ccp, "FB": self.flux,
                "LAP": self.lap}

    def acc(self, theta):
        s = float(np.min(np.sin(np.asarray(theta))))
        return {"G1": self.concurrency, "G2": s * self.angle, "G3": s * self.angle,
                "G4": self.ccp, "G5": self.flux, "G6": self.flux, "G0": self.lap}


def _junction_values(caches, geo, jv, fields, dim):
    vals, ders = [], []
    for i in range(3):
        v, d = extrapolated_trace(caches[i], fields[i], jv[:, i], geo.nu[:, i],
                                  geo.normal[:, i] if dim == 2 else None)
        vals.append(v)
        ders.append(d)
    return np.stack(vals, axis=1), np.stack(ders, axis=1)


def gcc_report(mesh, Xs, gamma, tol=None):
    """Geometric conditions evaluated directly on the deformed cluster."""
    tol = CompatibilityTolerances() if tol is None else tol
    g = np.asarray(gamma, dtype=float)
    jv = mesh.junction.vids
    pts = np.stack([Xs[i][jv[:, i]] for i in range(3)], axis=1)
    cc = float(max(np.linalg.norm(pts[:, a] - pts[:, b], axis=1).max()
                   for a, b in ((0, 1), (1, 2), (0, 2))))
    dmesh = mesh.with_positions(Xs)
    caches, geo = cluster_geometry(dmesh)
    ac = float(np.abs(geo.angles() - young_angles(g)[None, :]).max())
    Hs, dH = _junction_values(caches, geo, jv, [c.H for c in caches], mesh.dim)
    lap = [laplace_beltrami(c, c.H) for c in caches]
    Ls, _ = _junction_values(caches, geo, jv, lap, mesh.dim)
    res = {"CC": cc, "AC": ac, "CCP": float(np.abs(Hs @ g).max()),
           "FB": float(np.abs(np.stack([dH[:, 0] - dH[:, 1], dH[:, 1] - dH[:, 2]])).max()),
           "LAP": float(np.abs(Ls @ g).max())}
    return CompatibilityReport("GCC", res, tol.gcc())


def acc_report(mesh, frame, rho0, gamma, tol=None):
    """Boundary operators of the reference-frame formulation at ``rho0``.

    ``G0`` is the gamma-sum of the parabolic right-hand side at the junction:
    the normal-graph speed solving ``d_t rho <N*, N> + d_t mu <tau, N> = V``
    with ``V = -Lap H`` and ``d_t mu = T d_t rho``.
    """
    tol = CompatibilityTolerances() if tol is None else tol
    g = np.asarray(gamma, dtype=float)
    th = young_angles(g)
    jv = mesh.junction.vids
    rs = junction_trace(mesh, rho0)
    Xs = apply_graph(mesh, frame, rho0)
    dmesh = mesh.with_positions(Xs)
    caches, geo = cluster_geometry(dmesh)
    G = {"G1": float(np.abs(rs @ g).max())}
    for name, (i, j, k) in (("G2", (0, 1, 2)), ("G3", (1, 2, 0))):
        c = np.einsum("kd,kd->k", geo.normal[:, i], geo.normal[:, j])
        G[name] = float(np.abs(c - np.cos(th[k])).max())
    Hs, dH = _junction_values(caches, geo, jv, [c.H for c in caches], mesh.dim)
    G["G4"] = float(np.abs(Hs @ g).max())
    G["G5"] = float(np.abs(dH[:, 0] - dH[:, 1]).max())
    G["G6"] = float(np.abs(dH[:, 1] - dH[:, 2]).max())
    V = [-laplace_beltrami(c, c.H) for c in caches]
    Vs, _ = _junction_values(caches, geo, jv, V, mesh.dim)
    T = frame.T
    J = jv.shape[0]
    K = np.empty((J, 3))
    for q in range(J):
        a = np.array([frame.normal[i][jv[q, i]] @ geo.normal[q, i] for i in range(3)])
        b = np.array([frame.tau[i][jv[q, i]] @ geo.normal[q, i] for i in range(3)])
        A = np.diag(a) + b[:, None] * T
        K[q] = np.linalg.solve(A, Vs[q])
    G["G0"] = float(np.abs(K @ g).max())
    return CompatibilityReport("ACC", G, tol.acc(th))


def check_compatibility(mesh, rho0, gamma=(1.0, 1.0, 1.0), tol=None, frame=None):
    """Both reports for the initial offsets ``rho0`` on the reference ``mesh``."""
    frame = build_tangential_frame(mesh, gamma) if frame is None else frame
    Xs = apply_graph(mesh, frame, rho0)
    check_fold_over(mesh, Xs)
    return gcc_report(mesh, Xs, gamma, tol), acc_report(mesh, frame, rho0, gamma, tol)
