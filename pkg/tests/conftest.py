import numpy as np
import pytest

from triflow.cluster_mesh import double_bubble, double_bubble_for_triangles, theta_network


@pytest.fixture(scope="session")
def theta64():
    return theta_network((1.0, 1.0, 1.0), n=64)


@pytest.fixture(scope="session")
def bubble():
    return double_bubble((1.0, 1.0, 1.0), n=36)


@pytest.fixture(scope="session")
def bubble2000():
    return double_bubble_for_triangles((1.0, 1.0, 1.0), 2000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria: one summary line each

_CRITERIA = {}


@pytest.fixture
def detail(request):
    """Dict the test fills with measured numbers for its summary line."""
    d = {}
    request.node.criterion_detail = d
    return d


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n = mark.args[0]
    d = getattr(item, "criterion_detail", {})
    text = "  ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())
    prev_ok, prev = _CRITERIA.get(n, (True, ""))
    _CRITERIA[n] = (prev_ok and rep.passed, f"{prev}; {text}" if prev else text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, text = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
