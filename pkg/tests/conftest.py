import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def report(request):
    """Lets a criterion test attach a one-line measurement to its summary."""
    notes = []
    request.node.criterion_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = mark.args
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        notes = "; ".join(getattr(item, "criterion_notes", []))
        _CRITERIA[(number, item.name)] = (title, status, notes)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, _), (title, status, notes) in sorted(_CRITERIA.items()):
        line = f"criterion {number:>2} {status}: {title}"
        if notes:
            line += f" [{notes}]"
        terminalreporter.write_line(line)
