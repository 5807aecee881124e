import numpy as np
import pytest

from bcdyn import ConstantKernel, MetricModel, TopologicalModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit():
    return ConstantKernel(1.0)


@pytest.fixture
def metric():
    return MetricModel()


@pytest.fixture
def nearest():
    return TopologicalModel(1)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {text}")
