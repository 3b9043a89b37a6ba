import pytest

_LINES = []


class CriterionLog:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def record(self, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _LINES.append(line)
        print(line)
        return ok


@pytest.fixture(scope="session")
def criterion_log():
    return CriterionLog()


@pytest.fixture(scope="session")
def artifacts():
    """Serialized outputs of the seeded acceptance runs, for the determinism check."""
    return {}


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _LINES:
        terminalreporter.write_line(line)
