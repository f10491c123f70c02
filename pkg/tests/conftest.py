import pytest

_ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--run-nightly", action="store_true", default=False,
                     help="run paper-scale nightly acceptance checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-nightly"):
        return
    skip = pytest.mark.skip(reason="nightly job; pass --run-nightly")
    for item in items:
        if "nightly" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def report():
    """Record a one-line acceptance verdict, printed in the terminal summary."""

    def _report(criterion, passed, detail):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
