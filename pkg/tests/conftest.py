"""Collects per-criterion verdicts from the acceptance suite and prints them at the end."""
import pytest

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, part: str, passed: bool, detail: str = ""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}")
        for part, passed, detail in parts:
            tr.write_line(f"    {'pass' if passed else 'FAIL'}  {part}: {detail}")
