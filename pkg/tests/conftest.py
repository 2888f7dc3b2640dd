import sys

import numpy as np
import pytest

from bandchain.model import build_pec_cavity_spec, build_periodic_lattice_spec


@pytest.fixture
def three_atom_spec():
    # atoms at 0, L/4, -3L/8 with the first five harmonics, g_11/omega_1 = 0.25
    return build_pec_cavity_spec([0.0, 0.25, -0.375], 5, "all", 0.25, anchor=(0, 0))


@pytest.fixture
def two_atom_cavity_spec():
    return build_pec_cavity_spec([-0.25, 0.25], 30, "odd", 0.1)


@pytest.fixture
def lattice_spec():
    return build_periodic_lattice_spec(50, 1.0)


@pytest.fixture
def small_two_atom_spec():
    return build_pec_cavity_spec([-0.2, 0.15], 3, "all", 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    if mod is None:
        return
    verdicts = getattr(mod, "VERDICTS", {})
    terminalreporter.section("acceptance criteria")
    for number in range(1, 8):
        terminalreporter.write_line(verdicts.get(number, f"criterion {number}: FAIL - not run or errored"))
