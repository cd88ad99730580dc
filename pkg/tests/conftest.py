import math

import numpy as np
import pytest

from curvlab import EnergyModel, build_torus_with_hole, make_prescription


@pytest.fixture(scope="session")
def mesh16():
    return build_torus_with_hole(16, 0.25)


@pytest.fixture(scope="session")
def mesh32():
    return build_torus_with_hole(32, 0.25)


@pytest.fixture(scope="session")
def model16(mesh16):
    return EnergyModel.build(mesh16, make_prescription(mesh16, -math.pi / 2, 1.0, 1.0))


@pytest.fixture(scope="session")
def model32(mesh32):
    return EnergyModel.build(mesh32, make_prescription(mesh32, -math.pi / 2, 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
