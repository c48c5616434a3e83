"""Assembly of the split linear system: gamma-mass, B_u, B_v, junction rows, loads.

Unknowns are per-vertex values of (u^1, u^2, u^3, v^1, v^2, v^3). The
gamma-sum conditions on u and v are essential (Lagrange multipliers); the
conormal-jump conditions enter as natural boundary loads:

* u-equation load ``sum_k m_k (g1 b5 z1 - g3 b6 z3)`` yields
  ``d_nu v1 - d_nu v2 = b5`` and ``d_nu v2 - d_nu v3 = b6``;
* v-equation load ``-sum_k m_k (g1 b2 p1 - g3 b3 p3)`` yields
  ``d_nu u1 - d_nu u2 = b2`` and ``d_nu u2 - d_nu u3 = b3``,

with ``m_k`` the lumped trace mass of junction node ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SolverError


class TripleField:
    """One scalar vector per patch with junction-trace access."""

    __slots__ = ("parts",)

    def __init__(self, parts):
        self.parts = [np.asarray(p, dtype=float) for p in parts]

    @classmethod
    def zeros(cls, sizes):
        return cls([np.zeros(n) for n in sizes])

    @classmethod
    def from_flat(cls, vec, sizes):
        off = np.concatenate([[0], np.cumsum(sizes)])
        return cls([np.array(vec[off[i]:off[i + 1]]) for i in range(len(sizes))])

    @property
    def sizes(self):
        return tuple(len(p) for p in self.parts)

    def flat(self):
        return np.concatenate(self.parts)

    def trace(self, junction_vids):
        """(J, 3) values at the identified junction vertices."""
        jv = np.asarray(junction_vids)
        return np.stack([self.parts[i][jv[:, i]] for i in range(jv.shape[1])], axis=1)

    def copy(self):
        return TripleField([p.copy() for p in self.parts])

    def __getitem__(self, i):
        return self.parts[i]

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def _combine(self, other, op):
        if isinstance(other, TripleField):
            return TripleField([op(a, b) for a, b in zip(self.parts, other.parts)])
        return TripleField([op(a, other) for a in self.parts])

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, s):
        return self._combine(s, np.multiply)

    __rmul__ = __mul__

    def max_abs(self):
        return max(float(np.abs(p).max()) if len(p) else 0.0 for p in self.parts)


@dataclass
class ConstraintRows:
    """Sparse gamma-sum rows (one per junction node) and their targets."""

    C: sp.csr_matrix
    target: np.ndarray


@dataclass
class AssembledSystem:
    """Block saddle-point operator over (u, v, lambda_u, lambda_v)."""

    matrix: sp.csc_matrix
    mass: sp.dia_matrix
    Bu: sp.csr_matrix
    Bv: sp.csr_matrix
    constraints: ConstraintRows
    sizes: tuple
    dt: float
    gamma: tuple

    @property
    def n_dofs(self):
        return int(sum(self.sizes))

    @property
    def n_constraints(self):
        return self.constraints.C.shape[0]

    def dof(self, patch, vertex):
        return int(np.sum(self.sizes[:patch]) + vertex)


def _as_list(gamma, k):
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (k,))
    if np.any(g <= 0):
        raise SolverError("surface tensions must be positive")
    return g


def assemble_gamma_mass(caches, gamma):
    """Diagonal block diag(gamma_i M_i) of the lumped vertex masses."""
    g = _as_list(gamma, len(caches))
    d = np.concatenate([gi * c.mass for gi, c in zip(g, caches)])
    return sp.diags(d, format="csr")


def assemble_Bv(caches, gamma, C_v=0.0):
    """B_v[u, psi] = sum_i gamma_i (grad u . grad psi + C_v u psi)."""
    g = _as_list(gamma, len(caches))
    blocks = [gi * (c.stiffness + C_v * sp.diags(c.mass)) for gi, c in zip(g, caches)]
    return sp.block_diag(blocks, format="csr")


def assemble_Bu(caches, gamma, C_u=0.0):
    """B_u[v, zeta] = -sum_i gamma_i (grad v . grad zeta + C_u v zeta)."""
    return -assemble_Bv(caches, gamma, C_u)


def constraint_matrix(junction_vids, sizes, gamma):
    """Rows with gamma-weights at the three DOFs of each junction node."""
    jv = np.asarray(junction_vids, dtype=np.int64).reshape(-1, len(sizes)) if len(junction_vids) else \
        np.zeros((0, len(sizes)), dtype=np.int64)
    g = _as_list(gamma, len(sizes))
    off = np.concatenate([[0], np.cumsum(sizes)])
    J = jv.shape[0]
    rows = np.repeat(np.arange(J), len(sizes))
    cols = (jv + off[:-1][None, :]).ravel()
    vals = np.tile(g, J)
    if J and len(np.unique(jv, axis=0)) != J:
        raise SolverError("duplicate junction rows: constraint assembly is inconsistent")
    return sp.csr_matrix((vals, (rows, cols)), shape=(J, int(off[-1])))


def assemble_constraints(mesh, gamma, target_u=None, target_v=None):
    """Gamma-sum rows for u and v with affine targets (0 by default)."""
    jv = mesh.junction.vids
    C = constraint_matrix(jv, mesh.sizes, gamma)
    J = jv.shape[0]
    tu = np.zeros(J) if target_u is None else np.broadcast_to(np.asarray(target_u, float), (J,))
    tv = np.zeros(J) if target_v is None else np.broadcast_to(np.asarray(target_v, float), (J,))
    return ConstraintRows(C, np.array(tu)), ConstraintRows(C, np.array(tv))


def junction_trace_mass(mesh, Xs=None):
    """Lumped trace mass of each junction node (1 per point for curves)."""
    J = mesh.junction.n_nodes
    if mesh.dim == 1:
        return np.ones(J)
    Xs = mesh.positions() if Xs is None else Xs
    P = Xs[0][mesh.junction.vids[:, 0]]
    seg = np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1)
    return 0.5 * (seg + np.roll(seg, 1))


def assemble_boundary_load(mesh, gamma, b2=0.0, b3=0.0, b5=0.0, b6=0.0, trace_mass=None):
    """Natural-boundary right-hand sides (load_u, load_v) as flat vectors."""
    g = _as_list(gamma, 3)
    J = mesh.junction.n_nodes
    m = junction_trace_mass(mesh) if trace_mass is None else np.asarray(trace_mass)
    off = mesh.offsets
    jv = mesh.junction.vids
    bb = [np.broadcast_to(np.asarray(b, float), (J,)) for b in (b2, b3, b5, b6)]
    lu = np.zeros(off[-1])
    lv = np.zeros(off[-1])
    i0 = off[0] + jv[:, 0]
    i2 = off[2] + jv[:, 2]
    np.add.at(lu, i0, g[0] * bb[2] * m)
    np.add.at(lu, i2, -g[2] * bb[3] * m)
    np.add.at(lv, i0, -g[0] * bb[0] * m)
    np.add.at(lv, i2, g[2] * bb[1] * m)
    return lu, lv


def assemble_graph_Bv(caches, gamma, P, C_v=0.0):
    """Stiffness pulled back through the graph map: P^T (gamma K (x) I_D) P.

    In the interior this is the normal-graph second variation of the area
    (scalar stiffness plus curvature terms); near the junction it carries the
    tangential coupling of the slaved offsets.
    """
    g = _as_list(gamma, len(caches))
    D = caches[0].positions.shape[1]
    eye = sp.identity(D, format="csr")
    Kvec = sp.block_diag([gi * sp.kron(c.stiffness, eye) for gi, c in zip(g, caches)],
                         format="csr")
    B = (P.T @ Kvec @ P).tocsr()
    B = 0.5 * (B + B.T)
    if C_v:
        B = B + C_v * assemble_gamma_mass(caches, gamma)
    return B.tocsr()


def assemble_system(caches, gamma, dt, constraints=None, C_u=0.0, C_v=0.0, Bv=None):
    """Monolithic implicit-Euler split operator.

    Rows: ``M u/dt - B_u v + C^T lu = ...``, ``M v - B_v u + C^T lv = ...``,
    ``C u = t_u``, ``C v = t_v``. ``Bv`` overrides the default stiffness block.
    """
    if dt <= 0:
        raise SolverError("time step must be positive")
    sizes = tuple(c.n_vertices for c in caches)
    N = int(sum(sizes))
    M = assemble_gamma_mass(caches, gamma)
    Bu = assemble_Bu(caches, gamma, C_u)
    Bv = assemble_Bv(caches, gamma, C_v) if Bv is None else Bv
    if constraints is None:
        constraints = ConstraintRows(sp.csr_matrix((0, N)), np.zeros(0))
    C = constraints.C
    Z = sp.csr_matrix((C.shape[0], C.shape[0]))
    ZC = sp.csr_matrix(C.shape)
    A = sp.bmat([
        [M / dt, -Bu, C.T, None],
        [-Bv, M, None, C.T],
        [C, ZC, Z, None],
        [ZC, C, None, Z],
    ], format="csc")
    g = tuple(float(x) for x in _as_list(gamma, len(caches)))
    return AssembledSystem(A, M, Bu, Bv, constraints, sizes, float(dt), g)
