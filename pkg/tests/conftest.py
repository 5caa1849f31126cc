import numpy as np
import pytest
from hypothesis import settings

# fixed example streams so a run is reproducible
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_binary(rng, shape, p=0.5):
    return (rng.random(shape) < p).astype(np.float32)


_RESULTS = []


def record(line):
    """Keep an acceptance verdict for the terminal summary."""
    _RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_RESULTS, key=lambda s: (int("".join(c for c in s[1:4] if c.isdigit())), s)):
            terminalreporter.write_line(line)
