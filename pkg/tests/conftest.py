import numpy as np
import pytest

from artifact.core import CouplingParams, RadialGrid
from artifact.gap import default_gap_grid

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def hydrogen_grid():
    """Fine grid for bare Dirac-Coulomb levels up to n = 5."""
    return RadialGrid.exponential(3e-6, 400.0, 16000)


@pytest.fixture(scope="session")
def small_grid():
    return RadialGrid.exponential(1e-5, 80.0, 600)


@pytest.fixture(scope="session")
def gap_grid():
    return default_gap_grid()


@pytest.fixture(scope="session")
def helium_like():
    """Converged unprojected N = 2 state at kappa = 0.5, alpha = 0.25 on a modest grid."""
    from artifact.dfscf import scf_solve
    params = CouplingParams.neutral(0.5, 2)
    grid = RadialGrid.exponential(1e-4 * np.sqrt(0.75), 60.0 / params.alpha, 800)
    return scf_solve(params, grid, scheme="anderson")
