import os
import random

os.environ.setdefault("SBL_TEST_HOOKS", "1")

import pytest

from sblvote.group import TEST_GROUP, named_params


@pytest.fixture
def tg():
    return TEST_GROUP


@pytest.fixture(scope="session")
def g64():
    return named_params(64)


@pytest.fixture
def rng():
    return random.Random(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, name, ok, detail=""):
        line = f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
