import numpy as np
import pytest

from kfoliate.hypgeo import mink_inner
from kfoliate.surfcalc import BasePlaneChart


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chart32():
    return BasePlaneChart(0.1, 1.0, 32, 32)


@pytest.fixture
def chart64():
    return BasePlaneChart(0.1, 1.0, 64, 64)


def random_points(rng, n, scale=1.5):
    """Points of the hyperboloid with spatial part drawn from a Gaussian."""
    x = rng.normal(scale=scale, size=(n, 3))
    return np.column_stack([np.sqrt(1 + np.sum(x * x, axis=1)), x])


def random_tangent(rng, p):
    """Unit vector tangent to the hyperboloid at p."""
    v = rng.normal(size=p.shape)
    v = v + mink_inner(v, p)[..., None] * p
    return v / np.sqrt(mink_inner(v, v))[..., None]


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
