import numpy as np
import pytest
from hypothesis import settings

from periodic_hyperbolic.problem import GridSpec, ProblemSpec

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

M1_W = "exp(x)*(2+sin(2*pi*t))"
M1_F = "exp(x)*(-4*pi^2*sin(2*pi*t) - (2+sin(2*pi*t)) - 2*pi*cos(2*pi*t))"


@pytest.fixture(scope="session")
def telegraph():
    """Damped telegraph equation, loop weight 1/e."""
    return ProblemSpec.from_strings(a="1", a1="-1", f="exp(x)*sin(2*pi*t)")


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(33, 32)


def sup(values) -> float:
    return float(np.max(np.abs(values)))


def pytest_terminal_summary(terminalreporter):
    lines = getattr(__import__("sys").modules.get("test_acceptance"), "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
