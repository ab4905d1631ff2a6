import math

import pytest

from fuller_inclusion.lyapunov import QlfParams, QuasiLyapunov, calibrate
from fuller_inclusion.partition import build_ms_cover
from fuller_inclusion.solver import default_builders, offset_family


@pytest.fixture(scope="session")
def calibration():
    return calibrate(0.1)


@pytest.fixture(scope="session")
def params(calibration):
    return calibration[0]


@pytest.fixture(scope="session")
def qlf(params):
    return QuasiLyapunov(params)


@pytest.fixture(scope="session")
def wide():
    """Uncalibrated parameters wide enough for the |y| = 0.1 worked examples."""
    return QlfParams(a_bar=0.2, r=0.2)


@pytest.fixture(scope="session")
def cover8():
    return build_ms_cover(8, 0.5, 1.0)


@pytest.fixture(scope="session")
def cover8_cells(cover8):
    return cover8.cells()


@pytest.fixture(scope="session")
def engine_pa(params):
    return build_ms_cover(math.ceil(4.0 / params.r), params.r, 1.0)


@pytest.fixture(scope="session")
def origin_family(engine_pa, qlf):
    return offset_family((0.0, 0.0, 0.0), engine_pa, qlf)


@pytest.fixture(scope="session")
def limit_run(params):
    from fuller_inclusion.solver import solve_via_limits

    return solve_via_limits((0.0, 0.0, 0.0), 6, *default_builders(params))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test body sets ``detail`` and asserts."""
    state = {"detail": ""}
    yield state
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    name = request.node.name.removeprefix("test_")
    line = f"{'PASS' if ok else 'FAIL'} {name}: {state['detail']}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
