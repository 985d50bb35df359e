import pytest

from qdaa.bundled import get_model
from qdaa.sim import SimParams

# criterion number -> (passed, detail), filled by the acceptance suite
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def fig2():
    return get_model("fig2")


@pytest.fixture(scope="session")
def fig2_params():
    return SimParams(dt=0.01, t_max=50.0, crossing_tol=1e-9, M=200)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
