import pytest


@pytest.fixture(autouse=True)
def _no_shared_cache(monkeypatch):
    # keep unit tests independent of any cache configured in the environment
    monkeypatch.delenv("BOSEGAS_CACHE", raising=False)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
