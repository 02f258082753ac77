import pytest

# criterion number -> one-line verdict, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def verdict():
    """Record and print a criterion's result, then assert it."""

    def record(n: int, ok: bool, detail: str, elapsed: float) -> None:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  ({elapsed:.1f} s)  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return record
