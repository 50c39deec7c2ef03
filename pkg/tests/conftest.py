import pytest

from bltrick.energy import TrickConfig
from bltrick.grid import make_grid
from bltrick.model import builtin

# criterion id -> (title, passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def record(cid: int, title: str, passed: bool, detail: str) -> None:
    prev = ACCEPTANCE.get(cid)
    if prev is not None:
        passed = passed and prev[1]
        detail = f"{prev[2]}; {detail}"
    ACCEPTANCE[cid] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid:2d}. {title}: {detail}")


@pytest.fixture(scope="session")
def pos_spec():
    return builtin("power_minus_mass", N=3, p=3, m=1)


@pytest.fixture(scope="session")
def zero_spec():
    return builtin("double_power", N=3, a=7, b=3)


@pytest.fixture(scope="session")
def multi_spec():
    return builtin("double_power", N=3, a=7, b=3, case="zero-mass-multi")


@pytest.fixture(scope="session")
def pos_grid():
    return make_grid(3, 30.0, 2048, "uniform")


@pytest.fixture(scope="session")
def graded_grid():
    return make_grid(3, 200.0, 4096, ("geometric", 1.01))


@pytest.fixture(scope="session")
def pos_solution(pos_spec, pos_grid):
    from bltrick.solver import solve_ground

    return solve_ground(pos_spec, TrickConfig(), pos_grid)


@pytest.fixture(scope="session")
def zero_solution(zero_spec, graded_grid):
    from bltrick.solver import solve_ground

    return solve_ground(zero_spec, TrickConfig(), graded_grid)


@pytest.fixture(scope="session")
def oracle_shot(pos_spec):
    from bltrick.verify import shoot_ground

    return shoot_ground(pos_spec, 3, (4.0, 5.0), R=30.0, M=2048)


@pytest.fixture(scope="session")
def multi_solutions(multi_spec, graded_grid):
    from bltrick.solver import solve_multi

    return solve_multi(multi_spec, TrickConfig(), graded_grid, 3)
