"""Shared fixtures: the three reference fibers are solved once per session."""

import pytest

from gawbs.config import reference_pcf_config, reference_standard_config
from gawbs.geometry import FUSED_SILICA, build_standard_fiber
from gawbs.mesh import mesh_cross_section
from gawbs.study import run_study


def disk127_config():
    return reference_standard_config().with_overrides("fiber", cladding_diameter=127e-6, name="disk127")


@pytest.fixture(scope="session")
def std_study():
    return run_study(reference_standard_config())


@pytest.fixture(scope="session")
def pcf_study():
    return run_study(reference_pcf_config())


@pytest.fixture(scope="session")
def disk127_study():
    return run_study(disk127_config())


@pytest.fixture(scope="session")
def disk40():
    cs, om = build_standard_fiber(80e-6, 4.5e-6)
    return cs, om


@pytest.fixture(scope="session")
def disk40_mesh(disk40):
    return mesh_cross_section(disk40[0], 2e-6)


@pytest.fixture(scope="session")
def silica():
    return FUSED_SILICA


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
