from pathlib import Path

import pytest

from edivisive.excess import build_baseline, compute_excess, parse_weekly_deaths

DATA = Path(__file__).parent / "data"

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE = []


@pytest.fixture(scope="session")
def stmf_path():
    return DATA / "stmf_synthetic.csv"


@pytest.fixture(scope="session")
def stmf_records(stmf_path):
    return parse_weekly_deaths(stmf_path)


@pytest.fixture(scope="session")
def stmf_excess(stmf_records):
    return compute_excess(stmf_records, build_baseline(stmf_records, range(2015, 2020)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
