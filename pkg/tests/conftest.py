import sys

import pytest

from steklov.mesh import generate
from steklov.shapes import Ball, Ellipsoid


@pytest.fixture(scope="session")
def disk_coarse():
    return generate(Ball(1.0, n=2), target_h=0.05)


@pytest.fixture(scope="session")
def disk_fine():
    return generate(Ball(1.0, n=2), target_h=0.02)


@pytest.fixture(scope="session")
def ellipse_mesh():
    return generate(Ellipsoid((2.0, 1.0)), target_h=0.05)


@pytest.fixture(scope="session")
def ball3_coarse():
    return generate(Ball(1.0, n=3), target_h=0.25)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
