import math

import numpy as np
import pytest

from eigexplore.baselines import (
    MixturePolicy,
    SoftQConfig,
    boltzmann_policy,
    harmonic_step,
    integer_ramp,
    line_search_step,
    maxent_mixture,
    policy_distribution,
    reward_mixing_loop,
    soft_q_differential,
    soft_q_discounted,
    visitation_reward,
)
from eigexplore.errors import InvalidSpecError
from eigexplore.eve import extract_lambda_theta, recover_right_eigenvector, reward_from_uv, solve_fixed_point
from eigexplore.mdp import GridSpec, TabularMDP, build_gridworld, sa_operator, support_equal, uniform_policy
from eigexplore.spectral import entropy, stationary_distribution

from conftest import random_primitive_mdp


def dense_stationary(p):
    n = p.shape[0]
    system = np.vstack([np.eye(n) - p, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(system, rhs, rcond=None)[0]


def scalar_soft_dp(next_state, pi0, r, gamma, beta, steps):
    """Soft value iteration with plain Python loops over states and actions."""
    n_s, n_a = len(next_state), len(next_state[0])
    q = [[0.0] * n_a for _ in range(n_s)]
    for _ in range(steps):
        v = [math.log(sum(pi0[s][a] * math.exp(beta * q[s][a]) for a in range(n_a))) / beta for s in range(n_s)]
        q = [[r[s * n_a + a] + gamma * v[next_state[s][a]] for a in range(n_a)] for s in range(n_s)]
    return [x for row in q for x in row]


def test_visitation_reward_examples():
    np.testing.assert_allclose(visitation_reward(np.full(6, 1 / 6)), np.full(6, math.log(6)))
    r = visitation_reward(np.array([1.0, 0.0]))
    assert r[0] == 0.0
    assert r[1] == pytest.approx(-math.log(1e-12))


def test_visitation_reward_cliffworld(cliff_mdp):
    op = sa_operator(cliff_mdp, uniform_policy(cliff_mdp))
    d = dense_stationary(op.matrix)
    np.testing.assert_allclose(visitation_reward(policy_distribution(cliff_mdp, uniform_policy(cliff_mdp))),
                               -np.log(d), atol=1e-10)


def test_policy_distribution_is_stationary_distribution(rng):
    for _ in range(10):
        mdp, pi, op, _ = random_primitive_mdp(rng)
        np.testing.assert_array_equal(policy_distribution(mdp, pi), stationary_distribution(op))


def test_discounted_zero_reward(cliff_mdp):
    q, policy = soft_q_discounted(cliff_mdp, uniform_policy(cliff_mdp), np.zeros(76), 0.9, 3.0, 20)
    np.testing.assert_allclose(q, 0.0, atol=1e-15)
    np.testing.assert_allclose(policy, uniform_policy(cliff_mdp))


def test_discounted_geometric_series():
    q, _ = soft_q_discounted(TabularMDP([[0]]), [[1.0]], [1.0], 0.9, 1.0, 2000)
    assert q[0] == pytest.approx(10.0, abs=1e-10)


@pytest.mark.parametrize("gamma, beta", [(0.5, 1.0), (0.9, 3.0), (0.99, 0.5)])
def test_discounted_matches_scalar_dp(rng, gamma, beta):
    mdp = build_gridworld(GridSpec(2, 1, (0, 0)))
    pi0 = uniform_policy(mdp)
    r = rng.normal(size=mdp.n_pairs)
    q, _ = soft_q_discounted(mdp, pi0, r, gamma, beta, 40)
    expected = scalar_soft_dp(mdp.next_state.tolist(), pi0.tolist(), r, gamma, beta, 40)
    np.testing.assert_allclose(q, expected, atol=1e-10)


def test_discounted_is_gamma_contraction(rng):
    for _ in range(20):
        mdp, pi0, _, _ = random_primitive_mdp(rng)
        gamma = float(rng.uniform(0.1, 0.99))
        r = rng.normal(size=mdp.n_pairs)
        q = rng.normal(size=mdp.n_pairs) * 5
        prev_gap = None
        for _ in range(10):
            nxt, _ = soft_q_discounted(mdp, pi0, r, gamma, 2.0, 1, q)
            gap = np.max(np.abs(nxt - q))
            if prev_gap is not None:
                assert gap <= gamma * prev_gap + 1e-12
            prev_gap, q = gap, nxt


def test_discounted_rejects_gamma_one():
    with pytest.raises(InvalidSpecError):
        soft_q_discounted(TabularMDP([[0]]), [[1.0]], [0.0], 1.0, 1.0, 1)


def test_differential_constant_reward(rng):
    mdp, pi0, _, _ = random_primitive_mdp(rng)
    q, rho, _ = soft_q_differential(mdp, pi0, np.full(mdp.n_pairs, 0.7), 2.0, 50)
    assert rho == pytest.approx(0.7)
    assert np.ptp(q) == pytest.approx(0.0, abs=1e-12)


def test_differential_two_cycle(two_cycle):
    _, rho, _ = soft_q_differential(two_cycle, [[1.0], [1.0]], np.full(2, math.log(2)), 1.0, 10)
    assert rho == pytest.approx(math.log(2))


def test_differential_rate_matches_theta_star(cliff_mdp):
    pi0 = uniform_policy(cliff_mdp)
    op = sa_operator(cliff_mdp, pi0)
    u, _ = solve_fixed_point(op, 1.0, tol=1e-13)
    v = recover_right_eigenvector(u, op, 1.0)
    theta = extract_lambda_theta(u, v, op, 1.0).theta_star
    _, rho, _ = soft_q_differential(cliff_mdp, pi0, reward_from_uv(u, v), 1.0, 3000)
    assert rho == pytest.approx(theta, abs=1e-6)


def test_boltzmann_keeps_support(rng):
    mdp = TabularMDP([[0, 1, 1], [1, 0, 0]])
    pi0 = np.array([[0.5, 0.5, 0.0], [0.2, 0.0, 0.8]])
    pi = boltzmann_policy(pi0, rng.normal(size=6) * 30, 1.0)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0)
    assert support_equal(pi, pi0)
    assert mdp.n_pairs == 6


def test_mixing_loop_single_action():
    mdp = TabularMDP([[1], [2], [0]])
    _, trace = reward_mixing_loop(mdp, SoftQConfig(outer_iters=5, inner_steps=3, mix_rate=0.5))
    np.testing.assert_allclose(trace.column("entropy"), math.log(3))
    _, trace = reward_mixing_loop(mdp, SoftQConfig(gamma=None, outer_iters=5, inner_steps=3), mode="differential")
    np.testing.assert_allclose(trace.column("entropy"), math.log(3))


def test_mixing_loop_two_cycle(two_cycle):
    _, trace = reward_mixing_loop(two_cycle, SoftQConfig(outer_iters=3))
    assert trace.records[0].entropy == pytest.approx(math.log(2))
    assert list(trace.column("steps")) == [50, 100, 150]


def test_mixing_loop_improves_on_uniform(cliff_mdp):
    cfg = SoftQConfig(gamma=0.9, outer_iters=40, mix_rate=0.01)
    policy, trace = reward_mixing_loop(cliff_mdp, cfg)
    assert trace.records[-1].entropy > entropy(policy_distribution(cliff_mdp, uniform_policy(cliff_mdp)))
    assert support_equal(policy, uniform_policy(cliff_mdp))


def test_mixing_loop_callback_counts_sweeps(two_cycle):
    seen = []
    reward_mixing_loop(two_cycle, SoftQConfig(outer_iters=2, inner_steps=4), on_step=lambda k, q, p: seen.append(k))
    assert seen == list(range(1, 9))


def test_softq_config_validation():
    assert SoftQConfig().mix_rate == 0.1
    assert SoftQConfig(gamma=None).mix_rate == 0.05
    with pytest.raises(InvalidSpecError):
        SoftQConfig(gamma=1.0)
    with pytest.raises(InvalidSpecError):
        SoftQConfig(mix_rate=0.0)
    with pytest.raises(InvalidSpecError):
        SoftQConfig(inner_steps=0)
    with pytest.raises(InvalidSpecError):
        reward_mixing_loop(TabularMDP([[0]]), SoftQConfig(gamma=None), mode="discounted")
    with pytest.raises(InvalidSpecError):
        reward_mixing_loop(TabularMDP([[0]]), SoftQConfig(), mode="episodic")


def test_integer_ramp():
    ramp = integer_ramp(1, 10, 100)
    values = [ramp(t) for t in range(1, 101)]
    assert values[0] == 1.0 and values[-1] == 10.0
    assert set(values) == set(float(k) for k in range(1, 11))
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_mixture_policy_validation(two_cycle):
    with pytest.raises(ValueError):
        MixturePolicy([np.ones((2, 1))], [0.5])
    with pytest.raises(ValueError):
        MixturePolicy([np.ones((2, 1))], [0.5, 0.5])
    mix = MixturePolicy([np.ones((2, 1))], [1.0])
    np.testing.assert_allclose(mix.distribution(two_cycle), [0.5, 0.5])


def test_step_rules():
    assert harmonic_step(1) == pytest.approx(2 / 3)
    a = np.array([0.9, 0.1])
    b = np.array([0.1, 0.9])
    assert line_search_step(1, a, b) == pytest.approx(0.5, abs=1e-6)
    assert line_search_step(1, np.array([0.5, 0.5]), b) == pytest.approx(0.0, abs=1e-6)


def test_maxent_single_action():
    mix, trace = maxent_mixture(TabularMDP([[1], [2], [0]]), outer_iters=4, inner_steps=5)
    assert len(mix.components) == 1
    np.testing.assert_allclose(trace.column("entropy"), math.log(3))


def test_maxent_two_cycle(two_cycle):
    _, trace = maxent_mixture(two_cycle, outer_iters=2, inner_steps=5)
    assert trace.records[0].entropy == pytest.approx(math.log(2))


@pytest.mark.parametrize("rule", ["line_search", "harmonic"])
def test_maxent_mixture_valid(cliff_mdp, rule):
    mix, trace = maxent_mixture(cliff_mdp, outer_iters=15, step_rule=rule)
    assert mix.weights.min() >= 0
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)
    d = mix.distribution(cliff_mdp)
    assert d.min() >= 0 and d.sum() == pytest.approx(1.0, abs=1e-12)
    assert entropy(d) == pytest.approx(trace.records[-1].entropy, abs=1e-9)


def test_maxent_line_search_monotone(cliff_mdp):
    _, trace = maxent_mixture(cliff_mdp, outer_iters=60)
    h = trace.column("entropy")
    assert np.all(np.diff(h) >= -1e-6)
    assert h[-1] > entropy(policy_distribution(cliff_mdp, uniform_policy(cliff_mdp)))
