import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pomdp_bounds.envs import make_env  # noqa: E402


@pytest.fixture(scope="session")
def guessing_game():
    return make_env("guessing_game")


@pytest.fixture(scope="session")
def tiger():
    return make_env("tiger")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL/SKIP line per acceptance check; they are repeated in the summary."""

    def record(label: str, ok, detail: str = ""):
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        line = f"{status} {label}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
