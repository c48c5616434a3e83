# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels; see ``_kernels_py`` for the reference version."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def element_geometry(X, E):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef long long[:, ::1] e = np.ascontiguousarray(E, dtype=np.int64)
    cdef Py_ssize_t m = e.shape[0], k = e.shape[1], i, a, b, c
    cdef double tx, ty, l, inv, ax, ay, az, bx, by, bz, cx, cy, cz, area
    cdef double ed[3][3]
    nvec_a = np.empty((m, x.shape[1]))
    meas_a = np.empty(m)
    kloc_a = np.empty((m, k, k))
    cdef double[:, ::1] nv = nvec_a
    cdef double[::1] me = meas_a
    cdef double[:, :, ::1] kl = kloc_a
    if k == 2:
        for i in range(m):
            tx = x[e[i, 1], 0] - x[e[i, 0], 0]
            ty = x[e[i, 1], 1] - x[e[i, 0], 1]
            l = sqrt(tx * tx + ty * ty)
            nv[i, 0] = ty
            nv[i, 1] = -tx
            me[i] = l
            inv = 1.0 / l if l > 0 else 0.0
            kl[i, 0, 0] = inv
            kl[i, 1, 1] = inv
            kl[i, 0, 1] = -inv
            kl[i, 1, 0] = -inv
        return nvec_a, meas_a, kloc_a
    for i in range(m):
        a = e[i, 0]
        b = e[i, 1]
        c = e[i, 2]
        ax = x[b, 0] - x[a, 0]
        ay = x[b, 1] - x[a, 1]
        az = x[b, 2] - x[a, 2]
        bx = x[c, 0] - x[a, 0]
        by = x[c, 1] - x[a, 1]
        bz = x[c, 2] - x[a, 2]
        cx = 0.5 * (ay * bz - az * by)
        cy = 0.5 * (az * bx - ax * bz)
        cz = 0.5 * (ax * by - ay * bx)
        nv[i, 0] = cx
        nv[i, 1] = cy
        nv[i, 2] = cz
        area = sqrt(cx * cx + cy * cy + cz * cz)
        me[i] = area
        ed[0][0] = x[c, 0] - x[b, 0]
        ed[0][1] = x[c, 1] - x[b, 1]
        ed[0][2] = x[c, 2] - x[b, 2]
        ed[1][0] = x[a, 0] - x[c, 0]
        ed[1][1] = x[a, 1] - x[c, 1]
        ed[1][2] = x[a, 2] - x[c, 2]
        ed[2][0] = ax
        ed[2][1] = ay
        ed[2][2] = az
        inv = 1.0 / (4.0 * area) if area > 0 else 0.0
        for a in range(3):
            for b in range(3):
                kl[i, a, b] = (ed[a][0] * ed[b][0] + ed[a][1] * ed[b][1]
                               + ed[a][2] * ed[b][2]) * inv
    return nvec_a, meas_a, kloc_a


def scatter_stiffness(E, kloc):
    cdef long long[:, ::1] e = np.ascontiguousarray(E, dtype=np.int64)
    cdef double[:, :, ::1] kl = np.ascontiguousarray(kloc, dtype=np.float64)
    cdef Py_ssize_t m = e.shape[0], k = e.shape[1], i, a, b, p = 0
    rows_a = np.empty(m * k * k, dtype=np.int64)
    cols_a = np.empty(m * k * k, dtype=np.int64)
    vals_a = np.empty(m * k * k)
    cdef long long[::1] r = rows_a
    cdef long long[::1] c = cols_a
    cdef double[::1] v = vals_a
    for i in range(m):
        for a in range(k):
            for b in range(k):
                r[p] = e[i, a]
                c[p] = e[i, b]
                v[p] = kl[i, a, b]
                p += 1
    return rows_a, cols_a, vals_a


def lump(E, values, Py_ssize_t n):
    cdef long long[:, ::1] e = np.ascontiguousarray(E, dtype=np.int64)
    vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t m = e.shape[0], k = e.shape[1], i, a, j, ncomp
    cdef double w = 1.0 / k
    cdef double[::1] v1
    cdef double[::1] o1
    cdef double[:, ::1] v2
    cdef double[:, ::1] o2
    if vals.ndim == 1:
        out = np.zeros(n)
        v1 = vals
        o1 = out
        for i in range(m):
            for a in range(k):
                o1[e[i, a]] += w * v1[i]
        return out
    ncomp = vals.shape[1]
    out = np.zeros((n, ncomp))
    v2 = vals
    o2 = out
    for i in range(m):
        for a in range(k):
            for j in range(ncomp):
                o2[e[i, a], j] += w * v2[i, j]
    return out
