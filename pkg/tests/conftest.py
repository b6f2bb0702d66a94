import numpy as np
import pytest

from wncs.model import CostWeights, PlantModel

A1 = np.array([[1.1, 0.2], [0.2, 0.8]])
A2 = np.array([[1.2, 0.2], [0.2, 0.9]])
A3 = np.array([[1.3, 0.2], [0.2, 1.0]])
B = np.array([[1.0], [1.0]])

ACCEPTANCE_LINES = []


def build(A, Qw=0.1, Qv=0.1):
    n = len(A)
    return PlantModel.build(A, B, np.eye(n), Qw * np.eye(n), Qv * np.eye(n))


@pytest.fixture(scope="session")
def plants():
    return [build(A) for A in (A1, A2, A3)]


@pytest.fixture(scope="session")
def weights():
    return CostWeights.identity(2, 1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
