import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from structq.core import Alphabet
from structq.objectives import TableObjective

settings.register_profile(
    "default", max_examples=50, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ab():
    return Alphabet("AB")


@pytest.fixture
def table_ab(ab):
    return TableObjective.from_mapping(ab, {"AA": 0.0, "AB": 1.0, "BA": 2.0, "BB": 3.0})


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, collected from ``record_property``."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            for name, value in rep.user_properties:
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
