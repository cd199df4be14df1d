import math

import numpy as np
import pytest

from brwlevel.deviation import ModelSpec
from brwlevel.distributions import Gaussian, NegWeibullTail, OffspringLaw, Rademacher
from brwlevel.rng import stream

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def rademacher_I(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = 0.5 * ((1 + x) * np.log1p(x) + (1 - x) * np.log1p(-x))
    v = np.where(np.abs(x) == 1, math.log(2), v)
    return np.where(np.abs(x) > 1, np.inf, v)


def gaussian_I(x, sigma=1.0):
    return np.asarray(x, dtype=float) ** 2 / (2 * sigma**2)


@pytest.fixture
def rng():
    return stream(20240601)


@pytest.fixture(scope="session")
def schroder_spec():
    return ModelSpec(OffspringLaw({1: 0.5, 2: 0.5}), Rademacher(), 0.3, 0.1)


@pytest.fixture(scope="session")
def bottcher_spec():
    return ModelSpec(OffspringLaw({2: 1.0}), Rademacher(), 0.0, 0.1)


@pytest.fixture(scope="session")
def weibull2_spec():
    return ModelSpec(OffspringLaw({2: 1.0}), NegWeibullTail(1.0, 2.0, 0.3, 1.0), 0.0, 0.0)


@pytest.fixture(scope="session")
def gaussian_e_spec():
    # m = e: {1: p, 3: 1-p} with 1 + 2(1-p) = e
    p = 1 - (math.e - 1) / 2
    return ModelSpec(OffspringLaw({1: p, 3: 1 - p}), Gaussian(1.0), 0.0, 0.5)
