"""Pure numpy element kernels. Same contract as the compiled ``_kernels``."""
import numpy as np


def element_geometry(X, E):
    """Per-element vector area, measure and stiffness entries.

    Parameters
    ----------
    X : (n, D) float array of vertex positions, D = d + 1.
    E : (m, d + 1) int array of element connectivity.

    Returns
    -------
    nvec : (m, D) element normal scaled by element measure.
    meas : (m,) element measure (length or area).
    kloc : (m, d + 1, d + 1) local P1 stiffness matrices.
    """
    X = np.asarray(X, dtype=float)
    E = np.asarray(E, dtype=np.int64)
    k = E.shape[1]
    m = E.shape[0]
    if k == 2:
        t = X[E[:, 1]] - X[E[:, 0]]
        meas = np.sqrt(np.einsum("ij,ij->i", t, t))
        nvec = np.stack([t[:, 1], -t[:, 0]], axis=1)
        inv = 1.0 / np.where(meas > 0, meas, np.inf)
        kloc = np.empty((m, 2, 2))
        kloc[:, 0, 0] = inv
        kloc[:, 1, 1] = inv
        kloc[:, 0, 1] = -inv
        kloc[:, 1, 0] = -inv
        return nvec, meas, kloc
    x0, x1, x2 = X[E[:, 0]], X[E[:, 1]], X[E[:, 2]]
    cr = np.cross(x1 - x0, x2 - x0)
    nvec = 0.5 * cr
    meas = np.sqrt(np.einsum("ij,ij->i", nvec, nvec))
    # edge opposite to local vertex i
    ed = np.stack([x2 - x1, x0 - x2, x1 - x0], axis=1)
    dots = np.einsum("mid,mjd->mij", ed, ed)
    inv = 1.0 / np.where(meas > 0, 4.0 * meas, np.inf)
    kloc = dots * inv[:, None, None]
    return nvec, meas, kloc


def scatter_stiffness(E, kloc):
    """COO triplets for the assembled stiffness matrix."""
    E = np.asarray(E, dtype=np.int64)
    k = E.shape[1]
    rows = np.repeat(E, k, axis=1).ravel()
    cols = np.tile(E, (1, k)).ravel()
    return rows, cols, np.asarray(kloc).reshape(len(E), k * k).ravel()


def lump(E, values, n):
    """Distribute per-element values equally to the element vertices."""
    E = np.asarray(E, dtype=np.int64)
    k = E.shape[1]
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(E.ravel(), weights=np.repeat(values / k, k), minlength=n)
    out = np.zeros((n, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(E.ravel(), weights=np.repeat(values[:, c] / k, k), minlength=n)
    return out
