import numpy as np
import pytest

from minmaxsdp.polycore import Polynomial


def poly(nvars, terms):
    """Polynomial from {exponent tuple: coefficient}."""
    return Polynomial(nvars, dict(terms))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
