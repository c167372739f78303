import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vosub import Symbol, variable_order_example_symbol
from vosub._sym import parse
from vosub.torus import TorusGrid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def vo_symbol():
    """The variable-order example over q = 1 + xi^2 with alpha = 0.6 + 0.3 sin x."""
    q = Symbol.parse("1 + xi**2")
    return variable_order_example_symbol(q, parse("0.6 + 0.3*sin(x)", 1))


@pytest.fixture
def grid64():
    return TorusGrid(1, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
