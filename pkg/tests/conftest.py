import numpy as np
import pytest
from hypothesis import settings

from tailnest.fixtures import parity_sequence, random_sequence

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def corpus_r3(depth: int = 3) -> list:
    """Parity plus three random order-1 sequences, all r = 3."""
    seqs = [parity_sequence(3, depth)]
    for seed in (11, 12, 13):
        seqs.append(random_sequence(3, 1, depth, np.random.default_rng(seed)))
    return seqs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def corpus():
    return corpus_r3()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
