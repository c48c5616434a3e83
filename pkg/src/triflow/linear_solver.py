"""One implicit-Euler step of the split linear system with given inhomogeneities.

Solves, with multipliers for the gamma-sum rows,

    M (u - u_prev)/dt = B_u v + b_u(b5, b6) + M f
    M v              = B_v u + loads(b2, b3) + M g
    C u = b1,  C v = b4.

``g`` is an optional interior load on the v-equation used by the nonlinear
iteration. A factorization is reused for every solve with the same operator.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SolverError
from .weak_form import (AssembledSystem, TripleField, assemble_boundary_load,
                        assemble_system)

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


@dataclass
class LinearStepInput:
    """Data of one linear step: operator pieces, previous state and loads."""

    system: AssembledSystem
    u_prev: TripleField
    f: TripleField | None = None
    b: np.ndarray | None = None
    g: TripleField | None = None
    mesh: object = None
    trace_mass: np.ndarray | None = None
    clp_tol: float | None = None

    def __post_init__(self):
        if self.system.dt <= 0:
            raise SolverError("time step must be positive")
        if tuple(self.u_prev.sizes) != tuple(self.system.sizes):
            raise SolverError("previous field does not match the system sizes")
        J = self.system.n_constraints
        if self.b is None:
            self.b = np.zeros((6, J))
        self.b = np.asarray(self.b, dtype=float)
        if self.b.shape != (6, J):
            raise SolverError(f"boundary data must have shape (6, {J}), got {self.b.shape}")
        if np.any(self.b[[1, 2, 4, 5]] != 0) and self.mesh is None:
            raise SolverError("natural boundary loads need the mesh for trace integrals")


@dataclass
class SolveReport:
    residual_u: float
    residual_v: float
    constraint: float
    seconds: float
    warnings: list = field(default_factory=list)


class Factorized:
    """Sparse LU of an assembled system, reusable across right-hand sides."""

    def __init__(self, system):
        self.system = system
        t0 = time.perf_counter()
        try:
            self.lu = spla.splu(system.matrix.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"singular system: {exc}") from exc
        piv = np.abs(self.lu.U.diagonal())
        self.min_pivot = float(piv.min()) if len(piv) else np.inf
        if self.min_pivot < 1e-14 * max(piv.max(), 1.0):
            raise SolverError(f"ill-conditioned system, smallest pivot {self.min_pivot:.3e}")
        self.seconds = time.perf_counter() - t0

    def solve(self, rhs):
        return self.lu.solve(rhs)


def build_rhs(inp):
    """Right-hand side vector of the monolithic system and its pieces."""
    S = inp.system
    N = S.n_dofs
    up = inp.u_prev.flat()
    ru = S.mass @ up / S.dt
    rv = np.zeros(N)
    if inp.f is not None:
        ru = ru + S.mass @ inp.f.flat()
    if inp.g is not None:
        rv = rv + S.mass @ inp.g.flat()
    b = inp.b
    if inp.mesh is not None and np.any(b[[1, 2, 4, 5]] != 0):
        lu, lv = assemble_boundary_load(inp.mesh, S.gamma, b[1], b[2], b[4], b[5],
                                        inp.trace_mass)
        ru = ru + lu
        rv = rv + lv
    return np.concatenate([ru, rv, b[0], b[3]])


def solve_step(inp, factor=None):
    """Solve one linear step; returns (u_next, v_next, report)."""
    S = inp.system
    t0 = time.perf_counter()
    if factor is None:
        factor = Factorized(S)
    rhs = build_rhs(inp)
    x = factor.solve(rhs)
    N = S.n_dofs
    J = S.n_constraints
    u = x[:N]
    v = x[N:2 * N]
    msgs = []
    if inp.clp_tol is not None and inp.f is not None and inp.mesh is not None and J:
        clp = np.abs(inp.f.trace(inp.mesh.junction.vids) @ np.asarray(S.gamma)).max()
        if clp > inp.clp_tol:
            msg = f"compatibility residual {clp:.3e} exceeds {inp.clp_tol:.1e}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            msgs.append(msg)
    res = S.matrix @ x - rhs
    scale = max(np.abs(rhs).max(), 1.0)
    rep = SolveReport(float(np.abs(res[:N]).max() / scale),
                      float(np.abs(res[N:2 * N]).max() / scale),
                      float(np.abs(res[2 * N:]).max()) if J else 0.0,
                      time.perf_counter() - t0, msgs)
    if max(rep.residual_u, rep.residual_v) > RESIDUAL_TOL:
        log.warning("linear residual %.3e above %.1e", max(rep.residual_u, rep.residual_v),
                    RESIDUAL_TOL)
    sizes = S.sizes
    return TripleField.from_flat(u, sizes), TripleField.from_flat(v, sizes), rep


def step_system(caches, gamma, dt, mesh=None, C_u=0.0, C_v=0.0, Bv=None):
    """Assemble the step operator for a cluster (constraints on) or a closed patch."""
    from .weak_form import ConstraintRows, constraint_matrix

    cons = None
    if mesh is not None:
        cons = ConstraintRows(constraint_matrix(mesh.junction.vids, mesh.sizes, gamma),
                              np.zeros(mesh.junction.n_nodes))
    return assemble_system(caches, gamma, dt, cons, C_u, C_v, Bv)
