import pytest

_VERDICTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def verdict(capsys):
    """Record one criterion outcome; the line is printed now and again in the terminal summary."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {name}: {detail}"
        _VERDICTS.append((number, name, bool(ok), detail))
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_VERDICTS):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {name}: {detail}")
