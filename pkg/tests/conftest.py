import math

import numpy as np
import pytest

from dmvselect.field import DataSpec, FluidState, Grid1D, Trajectory, mean_energy
from dmvselect.thermo import GasParams, entropy_of


@pytest.fixture
def gp():
    return GasParams(1.4)


def constant_state(grid, gp, rho=1.0, u=0.0, theta=1.0):
    n = grid.n_cells
    rho = np.full(n, rho)
    return FluidState(grid, rho, rho * u, entropy_of(gp, rho, np.full(n, theta)))


def sod_state(grid, gp):
    left = grid.centers < 0.5 * (grid.x_min + grid.x_max)
    rho = np.where(left, 1.0, 0.125)
    p = np.where(left, 1.0, 0.1)
    return FluidState.from_primitive(grid, rho, 0.0, p, gp)


def constant_trajectory(s, gp, n_t=201, dt=0.05, E0=None):
    """Time-independent trajectory holding ``s``; default horizon 10."""
    E0 = mean_energy(s, gp) if E0 is None else E0
    times = dt * np.arange(n_t)
    M0 = s.grid.dx * float(np.sum(s.rho))
    return Trajectory(times, [s] * n_t, E0, M0, {"lifts": []})


def trajectory_from(states, times, E0, meta=None):
    s = states[0]
    M0 = s.grid.dx * float(np.sum(s.rho))
    return Trajectory(np.asarray(times, dtype=float), list(states), E0, M0, meta or {"lifts": []})


# acceptance lines collected by tests/test_acceptance.py and echoed in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
