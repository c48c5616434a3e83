"""Nonlinear time stepping as a fixed point of L o S over a reference cluster.

Each backward-Euler step solves for the graph offsets ``rho`` and the
chemical potential ``w`` (``w = -H`` at convergence) the discrete system

    F1 = G [ g_hat . (X - X_n)/dt + K_n w ]  = C^T l1   (tested on W),
    F2 = P^T G (g_hat w - K_n X)             = C^T l2   (admissible rho),
    C rho = 0,  C w = 0,

with ``X = sigma + P rho`` the graph map, ``K_n`` the stiffness at the old
positions and ``g_hat`` a time-averaged vertex vector area. Testing with
``w`` and ``rho - rho_n`` gives a discrete energy inequality; testing F1 with
patch constants in W gives conservation of the enclosed volumes.

The iteration is the defect correction

    L x_{m+1} = L x_m - F(x_m),

where ``L`` is the reference split operator of :mod:`triflow.linear_solver`.
The right-hand side is handed to the linear solver as inhomogeneities
(f on interior rows, b2/b3/b5/b6 on junction rows, g as interior v-load).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cluster_mesh import enclosed_volumes, surface_energy
from .diffgeo import cluster_geometry, extrapolated_trace, laplace_beltrami
from .errors import ConvergenceError, FoldOverError
from .graph_map import (PhysicsParams, apply_graph, build_tangential_frame, check_fold_over,
                        graph_operator, junction_trace, mu_from_rho, patch_inradii)
from .linear_solver import Factorized, LinearStepInput, solve_step, step_system
from .weak_form import TripleField, assemble_graph_Bv, junction_trace_mass

log = logging.getLogger(__name__)


@dataclass
class IterationReport:
    iterations: int
    update_norm: float
    updates: list
    ratios: list
    converged: bool
    seconds: float


@dataclass
class FlowState:
    """Reference cluster, graph offsets and clock of a running flow."""

    mesh: object
    params: PhysicsParams
    frame: object = None
    P: object = None
    caches: list = None
    system: object = None
    factor: object = None
    rho: TripleField = None
    w: TripleField = None
    time: float = 0.0
    step: int = 0
    rereferences: int = 0
    eps_ref: float = 0.0
    weights: str = "voronoi"
    operator: str = "graph"
    last_positions: list = None
    history: list = field(default_factory=list)

    @property
    def sizes(self):
        return self.mesh.sizes

    def positions(self, rho=None):
        rho = self.rho if rho is None else rho
        return apply_graph(self.mesh, self.frame, rho, check=False)

    def mu(self):
        return mu_from_rho(self.frame, self.frame.T, junction_trace(self.mesh, self.rho))

    def deformed_mesh(self):
        return self.mesh.with_positions(self.positions())


def init_state(mesh, params, weights="voronoi", operator="graph"):
    """Build frames, graph operator and the factorized reference operator.

    ``operator='graph'`` uses the pulled-back stiffness in the reference
    operator; ``'scalar'`` uses the plain patchwise stiffness.
    """
    st = FlowState(mesh, params, weights=weights, operator=operator)
    _setup_reference(st, mesh)
    caches, _ = cluster_geometry(mesh)
    H = TripleField([-c.H for c in caches])
    st.w = _project_trace(mesh, params.g, H)
    return st


def _project_trace(mesh, g, f):
    f = f.copy()
    jv = mesh.junction.vids
    tr = f.trace(jv)
    corr = (tr @ g) / (g @ g)
    for i in range(3):
        f.parts[i][jv[:, i]] -= corr * g[i]
    return f


def _setup_reference(st, mesh):
    p = st.params
    st.mesh = mesh
    st.frame = build_tangential_frame(mesh, p.gamma, p.w_tau)
    st.P = graph_operator(mesh, st.frame)
    st.caches, _ = cluster_geometry(mesh)
    Bv = assemble_graph_Bv(st.caches, p.gamma, st.P, p.C_v) if st.operator == "graph" else None
    st.system = step_system(st.caches, p.gamma, p.dt, mesh, p.C_u, p.C_v, Bv)
    st.factor = Factorized(st.system)
    st.rho = TripleField.zeros(mesh.sizes)
    st.eps_ref = p.eps_ref if p.eps_ref is not None else 0.2 * float(patch_inradii(mesh).min())
    st.trace_mass = junction_trace_mass(mesh)


def _vector_areas(mesh, Xs):
    out = []
    for p, X in zip(mesh.patches, Xs):
        nvec, _ = p.oriented_vector_areas(X)
        out.append(kernels.lump(p.elements, nvec, p.n_vertices))
    return out


def time_averaged_areas(mesh, X0, X1, weights="voronoi"):
    """Vertex vector areas averaged over the straight path X0 -> X1.

    Curves use the midpoint (exact, the vector length is linear); surfaces
    use Simpson's rule (exact, the vector area is quadratic). ``weights =
    'voronoi'`` rescales the directions to circumcentric dual areas.
    """
    Xm = [0.5 * (a + b) for a, b in zip(X0, X1)]
    if mesh.dim == 1:
        g = _vector_areas(mesh, Xm)
    else:
        g0, gm, g1 = (_vector_areas(mesh, Y) for Y in (X0, Xm, X1))
        g = [(a + 4 * b + c) / 6.0 for a, b, c in zip(g0, gm, g1)]
    if weights == "voronoi" and mesh.dim == 2:
        from .diffgeo import mixed_area

        out = []
        for p, gi, Y in zip(mesh.patches, g, Xm):
            m = mixed_area(Y, p.elements)
            out.append(gi / np.linalg.norm(gi, axis=1, keepdims=True) * m[:, None])
        g = out
    return g


class StepProblem:
    """Nonlinear residual F for one time step from ``X_n`` on a fixed reference."""

    def __init__(self, st, Xn):
        self.st = st
        self.mesh = st.mesh
        self.Xn = Xn
        self.g = st.params.g
        self.dt = st.params.dt
        from .diffgeo import stiffness_matrix

        self.Kn = [stiffness_matrix(X, p.elements) for p, X in zip(self.mesh.patches, Xn)]
        self.sizes = self.mesh.sizes
        self.D = self.mesh.ambient

    def residual(self, rho, w):
        st = self.st
        Xs = apply_graph(self.mesh, st.frame, rho, check=False)
        gh = time_averaged_areas(self.mesh, self.Xn, Xs, st.weights)
        F1, r2 = [], []
        for i in range(3):
            dX = Xs[i] - self.Xn[i]
            F1.append(self.g[i] * (np.einsum("ij,ij->i", gh[i], dX) / self.dt
                                   + self.Kn[i] @ w[i]))
            r2.append((self.g[i] * (gh[i] * w[i][:, None] - self.Kn[i] @ Xs[i])).ravel())
        F2 = st.P.T @ np.concatenate(r2)
        return np.concatenate(F1), F2, Xs


def residual_inhomogeneities(st, rho_m, w_m, rho_prev, F1, F2):
    """Map L x_m - F(x_m) to linear-solver data (f, b, g).

    Interior rows become the per-vertex loads f and g (divided by the gamma
    mass); junction rows become the jump data b2, b3, b5, b6, exact up to the
    gamma direction absorbed by the multipliers. b1 = b4 = 0.
    """
    S = st.system
    u, w = rho_m.flat(), w_m.flat()
    Md = S.mass.diagonal()
    Lu = S.mass @ u / S.dt - S.Bu @ w
    Lv = S.mass @ w - S.Bv @ u
    Ru = Lu - F1
    Rv = Lv - F2
    jv = st.mesh.junction.vids
    off = st.mesh.offsets
    jd = np.stack([off[i] + jv[:, i] for i in range(3)], axis=1)
    up = rho_prev.flat()
    f = (Ru - Md * up / S.dt) / Md
    gv = Rv / Md
    # junction rows: keep the time-derivative part in f, move the rest to b
    f_j = (u[jd] - up[jd]) / S.dt
    rem_u = Ru[jd] - Md[jd] * (up[jd] / S.dt + f_j)
    rem_v = Rv[jd]
    f[jd] = f_j
    gv[jd] = 0.0
    g = np.asarray(S.gamma)
    m = st.trace_mass
    b = np.zeros((6, jv.shape[0]))
    b[4] = (rem_u[:, 0] / g[0] - rem_u[:, 1] / g[1]) / m
    b[5] = (rem_u[:, 1] / g[1] - rem_u[:, 2] / g[2]) / m
    b[1] = -(rem_v[:, 0] / g[0] - rem_v[:, 1] / g[1]) / m
    b[2] = -(rem_v[:, 1] / g[1] - rem_v[:, 2] / g[2]) / m
    sizes = st.mesh.sizes
    return TripleField.from_flat(f, sizes), b, TripleField.from_flat(gv, sizes)


def fixed_point_step(st, dt=None, full=True, max_iters=None, tol=None):
    """Advance one step by the defect-correction fixed point; returns the report.

    ``full=False`` performs a single iteration (semi-implicit scheme).
    """
    p = st.params
    if dt is not None and dt != p.dt:
        raise ValueError("the step operator is factorized for params.dt; rebuild the state")
    max_iters = p.max_iters if max_iters is None else max_iters
    tol = p.tol if tol is None else tol
    t0 = time.perf_counter()
    Xn = st.positions()
    prob = StepProblem(st, Xn)
    rho_prev = st.rho.copy()
    rho, w = st.rho.copy(), st.w.copy()
    updates, ratios = [], []
    iters = max_iters if full else 1
    converged = False
    for m in range(iters):
        F1, F2, _ = prob.residual(rho, w)
        f, b, gload = residual_inhomogeneities(st, rho, w, rho_prev, F1, F2)
        inp = LinearStepInput(st.system, rho_prev, f=f, b=b, g=gload, mesh=st.mesh,
                              trace_mass=st.trace_mass)
        rho_new, w_new, _ = solve_step(inp, st.factor)
        upd = max((rho_new - rho).max_abs(), p.dt * (w_new - w).max_abs())
        updates.append(upd)
        if len(updates) > 1 and updates[-2] > 0:
            ratios.append(upd / updates[-2])
        rho, w = rho_new, w_new
        if not np.isfinite(upd) or rho.max_abs() > 5.0 * st.eps_ref:
            raise ConvergenceError(
                f"fixed-point iterate left the admissible ball at iteration {m + 1}"
                f" (update {upd:.3e}); halve the time step", m + 1, upd)
        if upd < tol:
            converged = True
            break
    if full and not converged:
        raise ConvergenceError(
            f"no convergence after {iters} iterations (update {updates[-1]:.3e});"
            " halve the time step", iters, updates[-1])
    Xs = apply_graph(st.mesh, st.frame, rho, check=False)
    check_fold_over(st.mesh, Xs)
    st.last_positions = Xn
    st.rho, st.w = rho, w
    st.time += p.dt
    st.step += 1
    rep = IterationReport(len(updates), updates[-1], updates, ratios, converged or not full,
                          time.perf_counter() - t0)
    if st.rho.max_abs() >= st.eps_ref:
        re_reference(st)
    return rep


def re_reference(st):
    """Adopt the deformed cluster as the new reference; rho is reset to 0."""
    Xs = st.positions()
    check_fold_over(st.mesh, Xs)
    new = st.mesh.with_positions(Xs)
    w = st.w
    last = st.last_positions
    _setup_reference(st, new)
    st.w = w
    st.last_positions = last
    st.rereferences += 1
    log.info("re-referenced at step %d (t=%.4g)", st.step, st.time)
    return st


# ---------------------------------------------------------------------------
# nonlinear geometric operators on the deformed cluster


@dataclass
class NonlinearOperators:
    V: list
    H: list
    lapH: list
    normal_products: np.ndarray
    angles: np.ndarray
    flux: np.ndarray
    ccp: np.ndarray
    lap_sum: np.ndarray


def nonlinear_operators(state_or_mesh, Xs=None, Xprev=None, dt=None, gamma=None):
    """V, H, Delta H, junction angles and conormal flux of H on a deformed cluster.

    Accepts a :class:`FlowState` (uses its current positions) or a mesh with
    explicit positions ``Xs``.
    """
    if isinstance(state_or_mesh, FlowState):
        st = state_or_mesh
        mesh = st.mesh
        Xs = st.positions()
        Xprev = st.last_positions
        dt = st.params.dt
        gamma = st.params.g
    else:
        mesh = state_or_mesh
        Xs = mesh.positions() if Xs is None else Xs
        gamma = np.ones(3) if gamma is None else np.asarray(gamma, dtype=float)
    check_fold_over(mesh, Xs)
    dmesh = mesh.with_positions(Xs)
    caches, geo = cluster_geometry(dmesh)
    H = [c.H for c in caches]
    lapH = [laplace_beltrami(c, h) for c, h in zip(caches, H)]
    if Xprev is not None and dt:
        V = [np.einsum("ij,ij->i", X - X0, c.normal) / dt for X, X0, c in zip(Xs, Xprev, caches)]
    else:
        V = [np.zeros(len(h)) for h in H]
    jv = mesh.junction.vids
    J = jv.shape[0]
    NP = np.empty((J, 3))
    for i, j, k in ((1, 2, 0), (2, 0, 1), (0, 1, 2)):
        NP[:, k] = np.einsum("kd,kd->k", geo.normal[:, i], geo.normal[:, j])
    tr = [extrapolated_trace(caches[i], H[i], jv[:, i], geo.nu[:, i],
                             geo.normal[:, i] if mesh.dim == 2 else None) for i in range(3)]
    flux = np.stack([t[1] for t in tr], axis=1)
    Hs = np.stack([t[0] for t in tr], axis=1)
    Ls = np.stack([lapH[i][jv[:, i]] for i in range(3)], axis=1)
    return NonlinearOperators(V, H, lapH, NP, geo.angles(), flux, Hs @ gamma, Ls @ gamma)


# ---------------------------------------------------------------------------
# run loop


@dataclass
class StepRecord:
    step: int
    time: float
    energy: float
    vol12: float
    vol13: float
    angle_error: float
    flux_residual: float
    ccp_residual: float
    iterations: int
    update_norm: float
    seconds: float
    rereferences: int = 0


def flux_residual(ops):
    f = ops.flux
    return float(np.max(np.abs(np.stack([f[:, 0] - f[:, 1], f[:, 1] - f[:, 2]]))))


def record(st, rep=None):
    """Per-step diagnostics of the current deformed cluster."""
    Xs = st.positions()
    ops = nonlinear_operators(st.mesh, Xs, gamma=st.params.g)
    th = st.params.theta
    ang = float(np.max(np.abs(ops.angles - th[None, :])))
    v12, v13 = enclosed_volumes(st.mesh, Xs)
    return StepRecord(st.step, st.time, surface_energy(st.mesh, st.params.g, Xs), v12, v13, ang,
                      flux_residual(ops), float(np.max(np.abs(ops.ccp))),
                      rep.iterations if rep else 0, rep.update_norm if rep else 0.0,
                      rep.seconds if rep else 0.0, st.rereferences)


def run(mesh, params, t_end=None, n_steps=None, full=True, weights="voronoi",
        callback=None, diagnostics_every=1):
    """Time loop; returns (final state, list of StepRecord)."""
    if n_steps is None:
        if t_end is None:
            raise ValueError("give t_end or n_steps")
        n_steps = int(round(t_end / params.dt))
    st = init_state(mesh, params, weights)
    recs = [record(st)]
    for k in range(n_steps):
        try:
            rep = fixed_point_step(st, full=full)
        except (ConvergenceError, FoldOverError) as exc:
            exc.step = st.step + 1
            exc.state = st
            raise
        if (k + 1) % diagnostics_every == 0 or k + 1 == n_steps:
            recs.append(record(st, rep))
        if callback is not None:
            callback(st, rep)
    return st, recs
