import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion's outcome for the summary."""
    results = request.config.stash[_RESULTS]

    @contextmanager
    def record(number: int, title: str):
        notes = []
        start = time.perf_counter()
        try:
            yield notes
        except BaseException:
            results[number] = (False, title, time.perf_counter() - start, notes)
            raise
        results[number] = (True, title, time.perf_counter() - start, notes)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, seconds, notes = results[number]
        detail = "; ".join(notes)
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{seconds:.2f}s]"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
