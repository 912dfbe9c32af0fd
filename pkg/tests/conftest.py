import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def attractor_states():
    """A handful of states on the Lorenz-96 attractor."""
    from nlenkf.model import make_reference

    traj = make_reference(7, spinup_mtu=9.0, n_saves=200)
    return traj[::20]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
