import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(k, ok, detail)`` records one pass/fail line for acceptance criterion ``k``."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(k, ok, detail):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((k, line))
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda kv: kv[0]):
            terminalreporter.write_line(line)
