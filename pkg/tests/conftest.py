import sys

import numpy as np
import pytest
from hypothesis import settings

from kaonbell import PhysicalConstants

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def pdg():
    return PhysicalConstants()


@pytest.fixture
def cp_conserving():
    return PhysicalConstants(eps=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
