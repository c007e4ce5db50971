import pytest

from rodspec.geometry import CellGeometry, CoefficientSet, CrossSection

DISK = "y1^2 + y2^2 - 0.09"


@pytest.fixture(scope="session")
def disk():
    return CellGeometry(DISK, CrossSection(0.5), True)


@pytest.fixture(scope="session")
def plain():
    return CellGeometry("1", CrossSection(0.5), False)


@pytest.fixture(scope="session")
def model_coeffs():
    return CoefficientSet.isotropic("1", "1 + x1^2")


# --- acceptance summary -------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_report(request):
    return request.config.stash[_ACCEPTANCE].append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
