import numpy as np
import pytest

from fbpcontrol.control import ControlConfig, ProblemData
from fbpcontrol.experiments import dirichlet_data, sine_target
from fbpcontrol.state import Discretization


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_data(level, kappa=1.0, v=dirichlet_data, target=sine_target):
    disc = Discretization.at_level(level, v, kappa)
    return ProblemData(disc, target(disc.trace.nodes))


def zero_v(x1, x2):
    return np.zeros_like(x1)


@pytest.fixture
def data2():
    return make_data(2)


@pytest.fixture
def cfg_ex1():
    return ControlConfig(lam=1e-3, radius=0.9)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
