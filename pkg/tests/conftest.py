from functools import lru_cache

import pytest

from ratevisc.scenarios import get_scenario
from ratevisc.viscosity import sweep

CRITERIA: dict[int, tuple[bool, str]] = {}


@lru_cache(maxsize=None)
def cached_sweep(name: str, ladder: tuple | None = None, c_mesh: float = 0.5):
    sc = get_scenario(name)
    return sc, sweep(sc.problem, ladder or sc.eps_ladder, c_mesh, rate_cap=sc.rate_cap)


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
