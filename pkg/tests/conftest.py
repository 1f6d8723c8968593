import os

import numpy as np
import pytest
from hypothesis import settings

from lilchain import FiniteKernel, IfsKernel, Observable

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


@pytest.fixture
def two_state():
    return FiniteKernel([[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture
def two_state_psi():
    return Observable.from_table([1.0, -2.0])


@pytest.fixture
def dyadic_ifs():
    return IfsKernel([0.5, 0.5], [0.0, 0.5], [0.5, 0.5])


@pytest.fixture
def ifs_psi():
    return Observable.linear_fn(1.0, -0.5)


@pytest.fixture
def config_path():
    return lambda name: os.path.join(CONFIGS, name)


def random_stochastic(rng, m):
    p = rng.random((m, m)) + 0.05
    return p / p.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
