import os
import sys
from types import SimpleNamespace

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from halfspace_bie.contour import discretize, preset  # noqa: E402
from halfspace_bie.kernels import IncidentField, incident_eval  # noqa: E402
from halfspace_bie.solver import assemble, boundary_rhs, solve  # noqa: E402

SOURCE_BELOW = (0.1, -1.0)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs a full solve at production resolution")


def solve_point_source(spec, segment_panels=(10, 44, 10), source=SOURCE_BELOW):
    """Point source below the curve: data u_in, exact scattered field u_in above."""
    dc = discretize(spec, None, segment_panels=segment_panels)
    field = IncidentField.point_source(spec.k, source)
    system = assemble(dc, spec.k)
    data = lambda a, b: incident_eval(field, a, b)
    density = solve(system, boundary_rhs(dc, data))
    return SimpleNamespace(spec=spec, dc=dc, field=field, system=system, density=density, data=data)


@pytest.fixture(scope="session")
def bump_problem():
    """The bump-cosine point-source problem at about 1000 nodes, solved once per session."""
    return solve_point_source(preset("paper-7.2"))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def record_criterion(number, passed, text):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
