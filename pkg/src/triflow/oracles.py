"""Small independent reference computations used to cross-check the solver.

Everything here is written from scratch with numpy/scipy only and never
imports the solver modules, so agreement with them is meaningful.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def curve_diffusion_mode_decay(k, dt, radius=1.0):
    """Decay factor of the k-th normal mode of surface diffusion on a circle.

    A perturbation ``r = R + eps cos(k s/R)`` decays like
    ``exp(-(k^4 - k^2) t / R^4)``; the ``-k^2`` part comes from the
    curvature of the circle itself.
    """
    if int(k) != k or k < 2:
        raise ValueError("modes k < 2 are rigid motions or dilations")
    if dt < 0 or radius <= 0:
        raise ValueError("need dt >= 0 and radius > 0")
    k = float(k)
    return math.exp(-(k ** 4 - k ** 2) / radius ** 4 * dt)


def decaying_exponents(lam, zeta_norm):
    """The two roots of ``w^4 + lam + |zeta|^4 = 0`` with negative real part."""
    c = complex(lam) + float(zeta_norm) ** 4
    if abs(c) < 1e-14:
        raise ValueError("degenerate probe (lambda, zeta) = (0, 0)")
    r = np.roots([1.0, 0.0, 0.0, 0.0, c])
    r = r[r.real < 0]
    if len(r) != 2:
        raise ValueError("expected exactly two decaying exponents")
    return r[np.argsort(r.imag)]


def dense_boundary_matrix(gamma, norms, lam, zeta_norm=None):
    """6x6 boundary matrix of the half-line ODE system on the decaying solutions.

    ``norms`` are the per-patch metric norms of the tangential frequency.
    Columns are ordered patch by patch, two exponentials each.
    """
    g = np.asarray(gamma, dtype=float)
    z = np.broadcast_to(np.asarray(norms if zeta_norm is None else zeta_norm, float), (3,))
    A = np.zeros((6, 6), dtype=complex)
    for i in range(3):
        for a, w in enumerate(decaying_exponents(lam, z[i])):
            col = 2 * i + a
            d0, d1, d2, d3 = 1.0, w, w ** 2, w ** 3
            A[0, col] = g[i] * d0
            if i == 0:
                A[1, col] = d1
            elif i == 1:
                A[1, col] = -d1
                A[2, col] = d1
            else:
                A[2, col] = -d1
            A[3, col] = g[i] * (z[i] ** 2 * d0 - d2)
            e = d3 - z[i] ** 2 * d1
            if i == 0:
                A[4, col] = e
            elif i == 1:
                A[4, col] = -e
                A[5, col] = e
            else:
                A[5, col] = -e
    return A


def dense_min_singular_value(gamma, norms, lam):
    return float(np.linalg.svd(dense_boundary_matrix(gamma, norms, lam), compute_uv=False)[-1])


def _bisect(f, a, b, tol=1e-15, max_iter=200):
    fa = f(a)
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
        if b - a < tol:
            break
    return 0.5 * (a + b)


def young_angles_bisection(gamma):
    """Angles between unit conormal pairs from force balance, by bisection.

    Fixes ``nu1 = e_x``, finds the opening angle ``a`` of ``nu2`` with
    ``|g1 + g2 e^{ia}| = g3`` and closes the polygon with ``nu3``. Returns
    the angles between (nu2, nu3), (nu3, nu1), (nu1, nu2).
    """
    g1, g2, g3 = (float(x) for x in gamma)
    if not (g1 < g2 + g3 and g2 < g1 + g3 and g3 < g1 + g2):
        raise ValueError("tensions violate the strict triangle inequality")
    a = _bisect(lambda t: abs(g1 + g2 * complex(math.cos(t), math.sin(t))) - g3, 0.0, math.pi)
    n1 = complex(1.0, 0.0)
    n2 = complex(math.cos(a), math.sin(a))
    n3 = -(g1 * n1 + g2 * n2) / g3

    def ang(p, q):
        return math.acos(max(-1.0, min(1.0, (p.conjugate() * q).real / (abs(p) * abs(q)))))

    return np.array([ang(n2, n3), ang(n3, n1), ang(n1, n2)])


def quadrature_area_volume(shape, radius=1.0, height=None, method="closed"):
    """Areas, volumes and lengths of simple analytic shapes.

    ``shape`` is ``'sphere'`` (area, volume), ``'cap'`` (area, volume of the
    cap of given ``height``) or ``'half-circle'`` (arc length, enclosed
    area). ``method='quadrature'`` integrates the surface of revolution
    numerically instead of using the closed forms.
    """
    R = float(radius)
    if R <= 0:
        raise ValueError("radius must be positive")
    if shape == "sphere":
        h = 2 * R
    elif shape == "cap":
        if height is None or not 0 < height <= 2 * R:
            raise ValueError("cap height must lie in (0, 2R]")
        h = float(height)
    elif shape == "half-circle":
        if method == "closed":
            return math.pi * R, 0.5 * math.pi * R * R
        length = integrate.quad(lambda t: R, 0.0, math.pi)[0]
        area = integrate.quad(lambda x: 2 * math.sqrt(max(R * R - x * x, 0.0)), -R, R)[0] / 2
        return length, area
    else:
        raise ValueError(f"unknown shape {shape!r}")
    if method == "closed":
        return 2 * math.pi * R * h, math.pi * h * h * (3 * R - h) / 3
    # polar angle from the top down to the cap rim
    psi = math.acos(1.0 - h / R)
    area = integrate.quad(lambda p: 2 * math.pi * R * R * math.sin(p), 0.0, psi)[0]
    vol = integrate.quad(lambda z: math.pi * (R * R - z * z), R - h, R)[0]
    return area, vol
