import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, title, ok, detail)`` then assert ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n, title, ok, detail=""):
        lines[n] = f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}"
        print(lines[n])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
