import numpy as np
import pytest

from fdiakit.grid import NetworkModel, load_ieee118, validate_network


@pytest.fixture(scope="session")
def ring3():
    """3-bus ring, unit reactances, reference bus 0."""
    net = NetworkModel(
        n_buses=3,
        branches=((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)),
        reference_bus=0,
        generator_buses=(0,),
        load_buses=(1, 2),
    )
    return validate_network(net)


@pytest.fixture(scope="session")
def net5():
    """5-bus test network with a mix of generator and load buses."""
    net = NetworkModel(
        n_buses=5,
        branches=((0, 1, 0.1), (1, 2, 0.2), (2, 3, 0.1), (3, 4, 0.25),
                  (0, 4, 0.2), (1, 3, 0.4)),
        reference_bus=0,
        generator_buses=(0, 3),
        load_buses=(1, 2, 4),
    )
    return validate_network(net)


@pytest.fixture(scope="session")
def ieee118():
    return load_ieee118()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collect one-line verdicts; printed in the terminal summary."""
    def record(line):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
