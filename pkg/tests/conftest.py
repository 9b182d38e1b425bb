import pytest
from hypothesis import settings

from scburst.ensemble import EnsembleParams

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def p363():
    return EnsembleParams(3, 6, 3, 100)


@pytest.fixture(scope="session")
def small_code_params():
    return EnsembleParams(3, 6, 3, 10, 64)


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
