import pytest

_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _RESULTS[num] = ("PASS" if rep.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        status, title = _RESULTS[num]
        terminalreporter.write_line(f"[{status}] criterion {num:2d}: {title}")
