import warnings

import numpy as np
import pytest

from vpl_landau.phase_space import BoundaryDecayWarning, make_grid, maxwellian

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line; lines are repeated in the terminal summary."""
    def record(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(1, 16, 16, 6.0)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(1, 32, 32, 6.0)


@pytest.fixture(scope="session")
def mu16(grid16):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        return maxwellian(grid16, homogeneous=True)


@pytest.fixture(scope="session")
def mu32(grid32):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryDecayWarning)
        return maxwellian(grid32, homogeneous=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
