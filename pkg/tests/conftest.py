import time

import pytest

ACCEPTANCE_LINES: list[str] = []


class Criterion:
    """Context manager recording one acceptance criterion's outcome.

    The line is printed immediately and repeated in the terminal summary.
    """

    def __init__(self, number: int, title: str, budget_s: float | None = None):
        self.number = number
        self.title = title
        self.budget_s = budget_s
        self.notes: list[str] = []

    def note(self, text: str) -> None:
        self.notes.append(text)

    def __enter__(self) -> "Criterion":
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        elapsed = time.perf_counter() - self.t0
        if exc_type is None and self.budget_s is not None and elapsed >= self.budget_s:
            self.note(f"runtime {elapsed:.1f}s exceeds budget {self.budget_s:.0f}s")
            status = "FAIL"
        elif exc_type is None:
            status = "PASS"
        elif issubclass(exc_type, pytest.skip.Exception):
            status = "SKIP"
            self.note(str(exc))
        else:
            status = "FAIL"
            self.note(f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        line = f"criterion {self.number} {status}: {self.title} [{elapsed:.1f}s] " + "; ".join(self.notes)
        ACCEPTANCE_LINES.append(line)
        print(line)
        if status == "FAIL" and exc_type is None:
            pytest.fail(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
