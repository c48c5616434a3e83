"""Reference computations: checked first, since other tests lean on them."""
import ast
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from triflow import oracles


def test_mode_decay_k2():
    assert oracles.curve_diffusion_mode_decay(2, 1e-3) == pytest.approx(0.98807, abs=5e-6)
    assert oracles.curve_diffusion_mode_decay(2, 1e-3) == pytest.approx(math.exp(-0.012))


def test_mode_decay_zero_step_and_radius_scaling():
    assert oracles.curve_diffusion_mode_decay(2, 0.0) == 1.0
    # rate scales like R^-4
    assert oracles.curve_diffusion_mode_decay(3, 16e-3, radius=2.0) == pytest.approx(
        oracles.curve_diffusion_mode_decay(3, 1e-3))


@pytest.mark.parametrize("k", [0, 1, 2.5])
def test_mode_decay_rejects_rigid_modes(k):
    with pytest.raises(ValueError):
        oracles.curve_diffusion_mode_decay(k, 1e-3)


def test_sphere_closed_forms():
    a, v = oracles.quadrature_area_volume("sphere")
    assert a == pytest.approx(4 * math.pi)
    assert v == pytest.approx(4 * math.pi / 3)


@pytest.mark.parametrize("h", [0.1, 0.5, 1.0, 1.7])
def test_cap_area_matches_quadrature(h):
    a, v = oracles.quadrature_area_volume("cap", height=h)
    aq, vq = oracles.quadrature_area_volume("cap", height=h, method="quadrature")
    assert a == pytest.approx(2 * math.pi * h)
    assert aq == pytest.approx(a, rel=1e-10)
    assert vq == pytest.approx(v, rel=1e-10)


def test_half_circle():
    assert oracles.quadrature_area_volume("half-circle")[0] == pytest.approx(math.pi)
    L, A = oracles.quadrature_area_volume("half-circle", method="quadrature")
    assert L == pytest.approx(math.pi)
    assert A == pytest.approx(math.pi / 2, rel=1e-8)


def test_bad_shapes():
    with pytest.raises(ValueError):
        oracles.quadrature_area_volume("torus")
    with pytest.raises(ValueError):
        oracles.quadrature_area_volume("cap", height=3.0)


@pytest.mark.parametrize("gamma", [(1, 1, 1), (1, 1, 1.2), (2, 1, 1.2), (1, 1.5, 0.8)])
def test_young_bisection_satisfies_sine_law(gamma):
    th = oracles.young_angles_bisection(gamma)
    assert th.sum() == pytest.approx(2 * math.pi, abs=1e-12)
    ratios = np.sin(th) / np.asarray(gamma, float)
    assert np.ptp(ratios) < 1e-12


def test_young_bisection_symmetric():
    assert np.allclose(oracles.young_angles_bisection((1, 1, 1)), 2 * math.pi / 3, atol=1e-13)


def test_young_bisection_degenerate():
    with pytest.raises(ValueError):
        oracles.young_angles_bisection((1, 1, 2))


def test_decaying_exponents():
    w = oracles.decaying_exponents(1.0, 0.5)
    assert np.all(w.real < 0)
    assert np.allclose(w ** 4, -(1.0 + 0.5 ** 4))
    with pytest.raises(ValueError):
        oracles.decaying_exponents(0.0, 0.0)


def test_dense_boundary_matrix_shape():
    A = oracles.dense_boundary_matrix((1, 1, 1), (0.0, 0.0, 0.0), 1.0)
    assert A.shape == (6, 6)
    assert oracles.dense_min_singular_value((1, 1, 1), 0.0, 1.0) > 0.1


def _imports(path):
    tree = ast.parse(open(path, encoding="utf-8").read())
    names = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names += [a.name for a in node.names]
        elif isinstance(node, ast.ImportFrom):
            names.append("." * node.level + (node.module or ""))
    return names


def test_oracles_never_import_solver_modules():
    names = _imports(oracles.__file__)
    assert not [n for n in names if n.startswith(".") or n.startswith("triflow")]
    code = ("import sys, triflow.oracles; "
            "print(sorted(m for m in sys.modules if m.startswith('triflow.')))")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         check=True, env=dict(os.environ)).stdout
    loaded = set(eval(out))
    solver = {"triflow.cluster_mesh", "triflow.diffgeo", "triflow.graph_map",
              "triflow.weak_form", "triflow.linear_solver", "triflow.nonlinear_stepper",
              "triflow.verification"}
    assert not loaded & solver
