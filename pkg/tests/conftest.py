import numpy as np
import pytest

from trilqg import build_controller, solve_coupled
from trilqg.plant import plant_p1, plant_p2, random_valid_plants


@pytest.fixture(scope="session")
def p1():
    return plant_p1()


@pytest.fixture(scope="session")
def p2():
    return plant_p2()


@pytest.fixture(scope="session")
def g1(p1):
    return solve_coupled(p1)


@pytest.fixture(scope="session")
def g2(p2):
    return solve_coupled(p2)


@pytest.fixture(scope="session")
def random_suite():
    """P2 plus twenty random valid plants with N in {2, 3}, solved once per session."""
    plants = [plant_p2()] + random_valid_plants(seed=2024, count=20)
    return [(pl, solve_coupled(pl)) for pl in plants]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def stable_matrix(rng, n, margin=0.5):
    M = rng.standard_normal((n, n))
    shift = max(np.linalg.eigvals(M).real.max(), 0.0) + margin
    return M - shift * np.eye(n)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Record one pass/fail line for an acceptance criterion; printed in the terminal summary."""
    def _record(label: str, passed: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
