import pytest

ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    """Record one acceptance line: report(label, ok, detail)."""
    def _record(label: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE.append((label, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
        return bool(ok)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
