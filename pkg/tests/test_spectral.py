import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eigexplore.errors import ImprimitiveError
from eigexplore.mdp import GridSpec, TabularMDP, build_gridworld, sa_operator, uniform_policy
from eigexplore.spectral import (
    birkhoff_coefficient,
    dominant_eigenpair,
    entropy,
    hilbert_metric,
    projective_diameter,
    stationary_distribution,
    tilted_operator,
)

from conftest import random_primitive_mdp

positive = st.floats(0.01, 100.0)


def dense_stationary(p):
    """Solve (I - P) d = 0 with sum(d) = 1 by least squares."""
    n = p.shape[0]
    system = np.vstack([np.eye(n) - p, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(system, rhs, rcond=None)[0]


def test_tilted_zero_reward_is_identity_map(rng):
    _, _, op, _ = random_primitive_mdp(rng)
    tilted = tilted_operator(op, np.zeros(op.n), 3.0)
    np.testing.assert_array_equal(tilted.matrix, op.matrix)


def test_tilted_single_entry():
    op = sa_operator(TabularMDP([[0]]), [[1.0]])
    tilted = tilted_operator(op, [-1.0], 1.0)
    np.testing.assert_allclose(tilted.matrix, [[math.exp(-1)]])


def test_tilted_two_cycle_doubles(two_cycle):
    op = sa_operator(two_cycle, [[1.0], [1.0]])
    tilted = tilted_operator(op, np.full(2, math.log(2)), 1.0)
    np.testing.assert_allclose(tilted.matrix, 2 * op.matrix)
    # the 2-cycle is periodic, so read the eigenvalue off a dense solver
    assert max(abs(np.linalg.eigvals(tilted.matrix))) == pytest.approx(2.0)


def test_tilted_rejects_bad_beta(two_cycle):
    op = sa_operator(two_cycle, [[1.0], [1.0]])
    with pytest.raises(ValueError):
        tilted_operator(op, np.zeros(2), 0.0)


def test_dominant_eigenpair_scalar():
    pair = dominant_eigenpair(np.array([[3.5]]))
    assert pair.eigenvalue == pytest.approx(3.5)
    assert pair.left[0] * pair.right[0] == pytest.approx(1.0)


def test_dominant_eigenpair_stochastic(cliff_mdp):
    op = sa_operator(cliff_mdp, uniform_policy(cliff_mdp))
    pair = dominant_eigenpair(op)
    assert pair.eigenvalue == pytest.approx(1.0, abs=1e-10)
    # column convention: the left vector is flat, the right one is the stationary law
    np.testing.assert_allclose(pair.left, np.ones(op.n), atol=1e-9)
    np.testing.assert_allclose(pair.right, dense_stationary(op.matrix), atol=1e-10)


def test_dominant_eigenpair_matches_dense_three_state(rng):
    for _ in range(10):
        while True:
            mdp, _, op, _ = random_primitive_mdp(rng, max_states=3)
            if mdp.n_states == 3:
                break
        tilted = tilted_operator(op, rng.normal(size=op.n), float(rng.uniform(0.5, 3)))
        pair = dominant_eigenpair(tilted)
        vals, right = np.linalg.eig(tilted.matrix)
        k = np.argmax(vals.real)
        vals_l, left = np.linalg.eig(tilted.matrix.T)
        kl = np.argmax(vals_l.real)
        assert pair.eigenvalue == pytest.approx(vals[k].real, rel=1e-8)
        v = np.abs(right[:, k].real)
        u = np.abs(left[:, kl].real)
        u *= op.n / u.sum()
        v /= u @ v
        np.testing.assert_allclose(pair.left, u, rtol=1e-8)
        np.testing.assert_allclose(pair.right, v, rtol=1e-8)


def test_dominant_eigenpair_residuals_and_normalization(rng):
    for _ in range(20):
        _, _, op, _ = random_primitive_mdp(rng)
        a = tilted_operator(op, rng.normal(size=op.n), 2.0).matrix
        pair = dominant_eigenpair(a, tol=1e-12)
        u, v, lam = pair.left, pair.right, pair.eigenvalue
        assert np.all(u > 0) and np.all(v > 0) and lam > 0
        assert np.max(np.abs(u @ a - lam * u)) <= 1e-12 * lam * np.max(u) * 10
        assert np.max(np.abs(a @ v - lam * v)) <= 1e-12 * lam * np.max(v) * 10
        assert u.sum() == pytest.approx(op.n)
        assert (u * v).sum() == pytest.approx(1.0)


def test_power_iteration_stochastic_lambda_one(rng):
    for _ in range(20):
        _, _, op, _ = random_primitive_mdp(rng)
        assert dominant_eigenpair(op).eigenvalue == pytest.approx(1.0, abs=1e-10)


def test_dominant_eigenpair_imprimitive():
    with pytest.raises(ImprimitiveError):
        dominant_eigenpair(np.array([[0.0, 1.0], [1.0, 0.0]]), max_iter=8)


def test_stationary_single_pair():
    op = sa_operator(TabularMDP([[0]]), [[1.0]])
    np.testing.assert_allclose(stationary_distribution(op), [1.0])


def test_stationary_two_cell_grid_uniform():
    mdp = build_gridworld(GridSpec(2, 1, (0, 0)))
    op = sa_operator(mdp, uniform_policy(mdp))
    d = stationary_distribution(op)
    np.testing.assert_allclose(d, dense_stationary(op.matrix), atol=1e-13)
    np.testing.assert_allclose(d, np.full(8, 1 / 8), atol=1e-13)


def test_stationary_cliffworld_uniform(cliff_mdp):
    op = sa_operator(cliff_mdp, uniform_policy(cliff_mdp))
    d = stationary_distribution(op)
    np.testing.assert_allclose(d, dense_stationary(op.matrix), atol=1e-13)
    assert d.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(op.matrix @ d - d).sum() <= 1e-13


def test_stationary_periodic_raises():
    # 0 <-> 1 is a 2-cycle and 2 feeds into it
    p = np.zeros((3, 3))
    p[1, 0] = p[0, 1] = p[0, 2] = 1.0
    with pytest.raises(ImprimitiveError):
        stationary_distribution(p, max_iter=8)


def test_entropy_examples():
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert entropy(np.full(7, 1 / 7)) == pytest.approx(math.log(7), abs=1e-15)
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.5 * math.log(2), abs=1e-15)
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.0397, abs=1e-4)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(1, 20), elements=st.floats(0, 1)))
def test_entropy_bounded_by_log_dim(w):
    if w.sum() <= 0:
        return
    d = w / w.sum()
    h = entropy(d)
    assert -1e-15 <= h <= math.log(d.size) + 1e-12
    if h >= math.log(d.size) - 1e-13:
        np.testing.assert_allclose(d, 1 / d.size, atol=1e-6)


def test_hilbert_metric_examples():
    x = np.array([0.3, 1.2, 5.0])
    assert hilbert_metric(x, x) == 0.0
    assert hilbert_metric(7.5 * x, x) == pytest.approx(0.0, abs=1e-14)
    assert hilbert_metric([1, 2], [2, 1]) == pytest.approx(math.log(4))
    with pytest.raises(ValueError):
        hilbert_metric([1, 0], [1, 1])
    with pytest.raises(ValueError):
        hilbert_metric([1, 2], [1, 2, 3])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(*[arrays(float, n, elements=positive)] * 3)))
def test_hilbert_metric_axioms(xyz):
    x, y, z = xyz
    assert hilbert_metric(x, y) >= 0
    assert hilbert_metric(x, y) == pytest.approx(hilbert_metric(y, x), abs=1e-12)
    assert hilbert_metric(x, z) <= hilbert_metric(x, y) + hilbert_metric(y, z) + 1e-12


def test_projective_diameter_examples(rng):
    rank_one = np.outer(rng.uniform(1, 2, 4), rng.uniform(1, 2, 4))
    assert projective_diameter(rank_one) == pytest.approx(0.0, abs=1e-12)
    assert birkhoff_coefficient(rank_one) == pytest.approx(0.0, abs=1e-12)
    assert projective_diameter(np.eye(3) + 0.0) == math.inf
    assert birkhoff_coefficient(np.eye(3)) == 1.0


def test_projective_diameter_brute_force(rng):
    for _ in range(20):
        m = rng.uniform(0.05, 1.0, (4, 4))
        brute = max(hilbert_metric(m[:, i], m[:, j]) for i, j in itertools.product(range(4), repeat=2))
        assert projective_diameter(m) == pytest.approx(brute, rel=1e-12)


def test_birkhoff_hopf_contraction(rng):
    for _ in range(200):
        n = int(rng.integers(2, 7))
        m = rng.uniform(0.01, 1.0, (n, n))
        tau = birkhoff_coefficient(m)
        assert tau < 1
        x = rng.uniform(0.01, 10, n)
        y = rng.uniform(0.01, 10, n)
        assert hilbert_metric(m @ x, m @ y) <= tau * hilbert_metric(x, y) + 1e-12
