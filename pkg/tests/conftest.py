import numpy as np
import pytest

from pricevar.model import ModelParams, Seasonality

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def two_item_params():
    return ModelParams(S0=np.ones(2), gamma=np.array([[-2.0, 0.25], [0.25, -1.5]]),
                       alpha=np.diag([0.5, 0.3]), c=np.zeros(2))


@pytest.fixture
def one_item_ce():
    return ModelParams.one_item(S0=1.0, gamma=-2.0, alpha=0.5)


@pytest.fixture
def unit_season():
    return Seasonality.uniform(1.0)


@pytest.fixture
def bumpy_season():
    return Seasonality(2.0, np.array([[0.0, 1.0], [0.5, 3.0], [1.2, 0.5], [2.0, 1.5]]))
