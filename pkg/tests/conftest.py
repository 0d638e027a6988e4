import numpy as np
import pytest

from worldcup.core import WatermarkConfig
from worldcup.toylm import build_markov, uniform_model


@pytest.fixture(scope="session")
def uniform_lm():
    return uniform_model(1000)


@pytest.fixture(scope="session")
def peaked_lm():
    return build_markov(1000, 0.002, 7)


@pytest.fixture
def cfg():
    return WatermarkConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion outcome for the end-of-run summary."""
    store = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_CRITERIA, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
