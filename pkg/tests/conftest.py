import contextlib

import pytest

ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def run(number, title):
        info = []
        try:
            yield info
        except BaseException as exc:
            line = f"criterion {number:>2} FAIL  {title}: {exc!s}".splitlines()[0]
            ACCEPTANCE.append(line)
            print(line)
            raise
        detail = f" ({'; '.join(info)})" if info else ""
        line = f"criterion {number:>2} PASS  {title}{detail}"
        ACCEPTANCE.append(line)
        print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
