import os
import subprocess
import sys

import numpy as np
import pytest

from triflow import _kernels_py, kernels

compiled = pytest.importorskip("triflow._kernels")


def _surface(rng, n=200, m=300):
    X = rng.normal(size=(n, 3))
    E = np.array([rng.choice(n, 3, replace=False) for _ in range(m)], dtype=np.int64)
    return X, E


def _curve(rng, n=50):
    X = rng.normal(size=(n, 2))
    E = np.column_stack([np.arange(n - 1), np.arange(1, n)]).astype(np.int64)
    return X, E


@pytest.mark.parametrize("make", [_surface, _curve])
def test_backends_agree(make, rng):
    X, E = make(rng)
    for a, b in zip(compiled.element_geometry(X, E), _kernels_py.element_geometry(X, E)):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)
    _, meas, kloc = _kernels_py.element_geometry(X, E)
    for a, b in zip(compiled.scatter_stiffness(E, kloc), _kernels_py.scatter_stiffness(E, kloc)):
        np.testing.assert_allclose(a, b, rtol=1e-14)
    n = len(X)
    np.testing.assert_allclose(compiled.lump(E, meas, n), _kernels_py.lump(E, meas, n),
                               rtol=1e-13)
    vec = rng.normal(size=(len(E), X.shape[1]))
    np.testing.assert_allclose(compiled.lump(E, vec, n), _kernels_py.lump(E, vec, n),
                               rtol=1e-12, atol=1e-14)


def test_stiffness_rows_sum_to_zero(rng):
    X, E = _surface(rng)
    _, _, kloc = kernels.element_geometry(X, E)
    np.testing.assert_allclose(kloc.sum(axis=2), 0.0, atol=1e-10)


def test_dispatch_default_uses_compiled():
    if os.environ.get("TRIFLOW_PURE_PYTHON"):
        pytest.skip("pure-python backend forced in this environment")
    assert kernels.BACKEND == "cython"


def test_pure_python_override():
    env = dict(os.environ, TRIFLOW_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", "from triflow import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env, timeout=60)
    assert r.stdout.strip() == "python"
