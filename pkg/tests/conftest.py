import pytest

# (number, verdict, detail) lines collected by the acceptance suite
ACCEPTANCE: list[tuple[int, str, str]] = []


@pytest.fixture
def record():
    def _record(number: int, ok: bool, detail: str) -> bool:
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE.append((number, verdict, detail))
        print(f"criterion {number}: {verdict} {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
