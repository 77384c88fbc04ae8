import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import math  # noqa: E402

from z2scatter.ansatz import AnsatzParams  # noqa: E402
from z2scatter.circuits import APPX_I, GroundStateAngles  # noqa: E402
from z2scatter.experiments import Setup  # noqa: E402
from z2scatter.model import ExactSystem, LatticeParams, brillouin_zone  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def system2():
    return ExactSystem(LatticeParams(2))


@pytest.fixture(scope="session")
def system5():
    return ExactSystem(LatticeParams(5))


def small_setup(packets=((1.0, 0.8, 0.0), (3.0, 0.8, -math.pi / 2)), scheme=APPX_I) -> Setup:
    """Two-site lattice with arbitrary but fixed angles and alphas."""
    p = LatticeParams(2)
    ap = AnsatzParams(1)
    for k in brillouin_zone(p):
        ap.set(k, 1, 0, 0.2)
        ap.set(k, 1, 1, -0.1)
    return Setup(p, GroundStateAngles(0.17, 0.78), ap, list(packets), scheme)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
