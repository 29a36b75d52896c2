import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lossynet.graph import build_graph, make_family

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def single_edge():
    return build_graph(2, [(1, 2)])


@pytest.fixture
def triangle():
    return build_graph(3, [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)])


@pytest.fixture
def directed_cycle():
    return build_graph(3, [(2, 1), (3, 2), (1, 3)])


@pytest.fixture
def k2():
    return make_family("circular", 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict_line():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
