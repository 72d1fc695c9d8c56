from __future__ import annotations

import pytest

from isamig import oracle
from isamig.fleet import generate_fleet


@pytest.fixture(scope="session")
def small_fleet():
    return generate_fleet(seed=11, n_packages=40, n_owners=6, n_cells=3, defect_rate=1.0)


@pytest.fixture(scope="session")
def clean_fleet(small_fleet):
    return oracle.fix_all(small_fleet)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
