import numpy as np
import pytest

from acsm import fpu_model as fm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def harmonic1():
    return fm.build_chain(fm.FpuParams(1, 0.0, 0.0, 0.5))


@pytest.fixture(scope="session")
def fpu40():
    return fm.build_chain(fm.FpuParams(40, 0.25, 0.25, 1e-3))


def within(x, ref, err, k=3.0):
    """|x - ref| <= k * err, elementwise."""
    return np.all(np.abs(np.asarray(x) - np.asarray(ref)) <= k * np.asarray(err))


ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    """Store the verdict of an acceptance criterion and echo it."""
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
