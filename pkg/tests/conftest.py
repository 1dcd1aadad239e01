import sys

import numpy as np
import pytest

from biotcgp.assembly import PhysicalParams
from biotcgp.mesh import structured_mesh

SEED = 20260808


def pytest_terminal_summary(terminalreporter):
    """Echo the per-criterion acceptance lines after the test summary."""
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "REPORT_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def params_ell1():
    return PhysicalParams(eta=16.0)


@pytest.fixture(scope="session")
def mesh2():
    return structured_mesh(2, 2)


@pytest.fixture(scope="session")
def mesh1():
    return structured_mesh(1, 1)


@pytest.fixture()
def rng():
    return np.random.default_rng(SEED)
