import numpy as np
import pytest

_ACCEPTANCE = []


class AcceptanceLog:
    """Collects one line per acceptance criterion for the terminal summary."""

    def record(self, criterion, label, passed, detail=""):
        _ACCEPTANCE.append((criterion, label, bool(passed), detail))
        return passed

    def criterion(self, number, label):
        return Criterion(self, str(number), label)


class Criterion:
    """Context manager gathering the sub-checks of one criterion.

    On exit a single line is recorded; failed sub-checks (or an exception)
    turn it into FAIL and the test then fails with the list of culprits.
    """

    def __init__(self, log, number, label):
        self.log, self.number, self.label = log, number, label
        self.items = []

    def check(self, name, value, ok):
        self.items.append((name, value, bool(ok)))
        return ok

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        detail = "; ".join(f"{k}={_short(v)}{'' if ok else ' (FAIL)'}" for k, v, ok in self.items)
        if exc_type is not None:
            detail += f"; raised {exc_type.__name__}: {exc}"
        passed = exc_type is None and all(ok for _, _, ok in self.items)
        self.log.record(self.number, self.label, passed, detail)
        if exc_type is None and not passed:
            bad = [k for k, _, ok in self.items if not ok]
            raise AssertionError(f"criterion {self.number} failed: {', '.join(bad)}\n{detail}")
        return False


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


@pytest.fixture
def acceptance():
    return AcceptanceLog()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, label, ok, detail in sorted(_ACCEPTANCE, key=lambda r: (int(r[0].split(".")[0]), r[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {crit:>5} {label}: {detail}")
