from pathlib import Path

import pytest

from spgeq.network import load_network

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixture_net():
    def load(name):
        return load_network(FIXTURES / ("%s.json" % name))

    return load


# criterion -> (passed, detail); passed is None for informational lines
ACCEPTANCE: dict[str, tuple] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (len(k), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line("criterion %-13s %s  %s" % (key, "INFO" if ok is None else "PASS" if ok else "FAIL", detail))
