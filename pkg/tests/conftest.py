import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem(rng):
    e = rng.random((16, 8))
    target = e @ (rng.random(8) < 0.5) + 0.1 * rng.standard_normal(16)
    return e, target


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""
    def record(number, ok, detail, elapsed, limit):
        fast = elapsed < limit
        status = "PASS" if ok and fast else "FAIL"
        line = f"criterion {number:>2}: {status}  {detail}  [{elapsed:.1f}s / limit {limit:.0f}s]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok and fast
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
