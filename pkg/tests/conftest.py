import pytest

_LINES = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``record(number, title, passed, detail)`` for the acceptance summary."""
    lines = request.config.stash.setdefault(_LINES, {})

    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        lines[number] = f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        print(lines[number])

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
