import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance(request):
    """Record one ``ACCEPTANCE [k] PASS/FAIL ...`` line, printed at the end of the run."""
    lines = request.config.stash[_LINES]

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE [{k}] {'PASS' if ok else 'FAIL'} {detail}"
        lines.append((k, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
