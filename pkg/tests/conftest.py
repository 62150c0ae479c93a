"""Shared test infrastructure.

The acceptance suite registers one verdict per criterion; the hook below
prints them as a single PASS/FAIL block after the normal pytest output so
the gate can be read at a glance.
"""

_CRITERIA: list[tuple[str, bool, str]] = []


def report_criterion(name: str, passed: bool, detail: str = "") -> None:
    _CRITERIA.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        verdict = "PASS" if passed else "FAIL"
        line = f"{verdict}  {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
