import time

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, limit): acceptance criterion n with a runtime limit in seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    start = time.perf_counter()
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, limit = mark.args
    elapsed = time.perf_counter() - start
    ok = outcome.excinfo is None and elapsed < limit
    prev = _results.get(n)
    if prev is not None:
        ok, elapsed = ok and prev[0], max(elapsed, prev[1])
    _results[n] = (ok, elapsed, limit, item.originalname)
    if outcome.excinfo is None and elapsed >= limit:
        pytest.fail(f"criterion {n} took {elapsed:.1f} s, limit {limit} s")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        ok, elapsed, limit, name = _results[n]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {elapsed:6.2f} s (limit {limit} s)  {name}")
