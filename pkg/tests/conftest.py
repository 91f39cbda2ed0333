"""Shared fixtures and the acceptance-criteria summary hook."""

from __future__ import annotations

import pytest

#: (criterion, status, detail) tuples collected by the acceptance tests.
ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion.

    The line is printed immediately (visible with -s) and repeated in the
    terminal summary so a plain pytest run still shows every verdict.
    """

    def record(criterion: str, passed: bool, detail: str = "") -> None:
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_RESULTS.append((criterion, status, detail))
        print(f"ACCEPTANCE {criterion}: {status}" + (f" ({detail})" if detail else ""))
        assert passed, f"{criterion}: {detail}"

    return record


@pytest.fixture
def acceptance_skip():
    def record(criterion: str, reason: str) -> None:
        ACCEPTANCE_RESULTS.append((criterion, "SKIP", reason))
        print(f"ACCEPTANCE {criterion}: SKIP ({reason})")
        pytest.skip(reason)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in ACCEPTANCE_RESULTS:
        line = f"{criterion}: {status}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
