import numpy as np
import pytest

from eigexplore.errors import ImprimitiveError
from eigexplore.mdp import TabularMDP, build_gridworld, cliffworld, index_of_primitivity, sa_operator

ACCEPTANCE_LINES = []


def random_primitive_mdp(rng, max_states=6, max_actions=3, min_pairs=2, policy="random"):
    """Random deterministic MDP whose chain under a positive policy is primitive."""
    while True:
        s = int(rng.integers(1, max_states + 1))
        a = int(rng.integers(1, max_actions + 1))
        if s * a < min_pairs:
            continue
        mdp = TabularMDP(rng.integers(0, s, (s, a)))
        if policy == "uniform":
            pi = np.full((s, a), 1.0 / a)
        else:
            pi = rng.uniform(0.1, 1.0, (s, a))
            pi /= pi.sum(axis=1, keepdims=True)
        op = sa_operator(mdp, pi)
        try:
            m = index_of_primitivity(op)
        except ImprimitiveError:
            continue
        return mdp, pi, op, m


@pytest.fixture(scope="session")
def cliff_mdp():
    return build_gridworld(cliffworld())


@pytest.fixture
def two_cycle():
    return TabularMDP([[1], [0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
