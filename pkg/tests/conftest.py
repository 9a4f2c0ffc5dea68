from pathlib import Path

import pytest

from regdialog import compare_chain, parse_snapshot, seed_knowledge_base

FIXTURES = Path(__file__).parent / "fixtures"
CASE = [FIXTURES / f"case_rp{i}.regsnap" for i in (1, 2, 3)]


@pytest.fixture(scope="session")
def kb():
    return seed_knowledge_base()


@pytest.fixture(scope="session")
def case_snapshots():
    return [parse_snapshot(p.read_bytes()) for p in CASE]


@pytest.fixture(scope="session")
def case_diffsets(case_snapshots):
    return compare_chain(case_snapshots)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
