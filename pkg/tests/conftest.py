from collections import defaultdict

import pytest

_VERDICTS = defaultdict(list)  # criterion -> [(part, passed, detail)]


class Verdicts:
    """Collects named checks for one acceptance criterion."""

    def __init__(self, criterion: str):
        self.criterion = criterion
        self.failures = []

    def check(self, part: str, passed: bool, detail: str = ""):
        passed = bool(passed)
        _VERDICTS[self.criterion].append((part, passed, detail))
        if not passed:
            self.failures.append(f"{part}: {detail}")
        return passed

    def finish(self):
        assert not self.failures, "; ".join(self.failures)


@pytest.fixture
def verdicts(request):
    return lambda criterion: Verdicts(criterion)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_VERDICTS, key=lambda c: (len(c), c)):
        parts = _VERDICTS[crit]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for part, passed, detail in parts:
            tr.write_line(f"    [{'ok' if passed else 'FAIL'}] {part}: {detail}")
