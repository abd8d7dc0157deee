from __future__ import annotations

import numpy as np
import pytest

from rippler.model import FixedModel, ModelParams, Population

# Lines reported by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def fixed():
    return FixedModel()


@pytest.fixture
def tiny():
    """Two housemates over four steps with one positive and one negative test."""
    pop = Population(np.array([0, 0]), np.zeros((2, 2)))
    theta = ModelParams(0.4, 1.5, 0.0, 0.0)
    y = np.full((4, 2), -1, np.int8)
    y[1, 0] = 1
    y[3, 1] = 0
    return pop, theta, y


@pytest.fixture
def small_pop():
    """Twelve people in four households with non-trivial covariates."""
    hh = np.repeat(np.arange(4), [2, 3, 4, 3])
    cov = make_rng(7).normal(size=(12, 2))
    return Population(hh, cov - cov.mean(axis=0))
