import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vecot.graph import build_graph

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# acceptance criterion number -> verdict line, filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])


@pytest.fixture
def k2():
    return build_graph([(0, 1, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_connected_graph(rng, n, extra=None, wlo=0.5, whi=2.0):
    """Random spanning tree plus a few chords, canonical orientation."""
    edges = {}
    for i in range(1, n):
        edges[(int(rng.integers(0, i)), i)] = float(rng.uniform(wlo, whi))
    extra = int(rng.integers(0, n)) if extra is None else extra
    for _ in range(extra):
        i, j = sorted(int(v) for v in rng.choice(n, 2, replace=False))
        edges.setdefault((i, j), float(rng.uniform(wlo, whi)))
    return build_graph([(i, j, w) for (i, j), w in edges.items()], n=n)


def interior_mass(rng, n, floor=0.1):
    return (1 - floor) * rng.dirichlet(np.ones(n)) + floor / n


@pytest.fixture(autouse=True)
def _quiet_max_iters():
    from vecot.exceptions import MaxIterationsExceeded

    with warnings.catch_warnings():
        warnings.simplefilter("error", MaxIterationsExceeded)
        yield
