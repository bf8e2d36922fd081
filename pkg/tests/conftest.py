import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance_report(capsys):
    """Record and print one pass/fail line for an acceptance criterion."""

    def report(number, ok, detail):
        line = f"ACCEPTANCE criterion {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
