import pytest

_LINES = []


@pytest.fixture
def report(request):
    """Print a one-line verdict immediately and again in the terminal summary."""
    tr = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(line):
        _LINES.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
