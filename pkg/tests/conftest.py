import numpy as np
import pytest

from hamdelay.core import Loop, TimeGrid


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def circle_loop(N, radius=1.0, winding=1, phase=0.0):
    t = TimeGrid(N).nodes
    theta = 2 * np.pi * winding * t + phase
    return Loop(N, radius * np.stack([np.cos(theta), np.sin(theta)], axis=1))


@pytest.fixture(scope="session")
def example2_cp():
    from hamdelay.solver import SolveConfig, solve_system
    from hamdelay.systems import example2_harmonic

    return solve_system(example2_harmonic(), 1, SolveConfig(N=64))


@pytest.fixture(scope="session")
def bov_cp():
    from hamdelay.solver import SolveConfig, bov_solve

    return bov_solve(1, SolveConfig(N=64))


@pytest.fixture(scope="session")
def example5_cp():
    from hamdelay.solver import SolveConfig, solve_system
    from hamdelay.systems import example5_coupled_oscillators

    return solve_system(example5_coupled_oscillators(eps=0.1), 1, SolveConfig(N=64))
