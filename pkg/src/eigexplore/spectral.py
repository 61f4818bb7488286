"""Tilted operators, Perron eigenpairs, stationary distributions and the
Hilbert projective metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from .errors import ConvergenceError, ImprimitiveError
from .mdp import SAOperator, index_of_primitivity, is_ergodic


@dataclass(frozen=True, eq=False)
class TiltedOperator:
    matrix: np.ndarray
    beta: float


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Dominant eigenpair scaled so that ``sum(left) == n`` and ``left @ right == 1``."""

    eigenvalue: float
    left: np.ndarray
    right: np.ndarray

    @property
    def distribution(self):
        return self.left * self.right


def _matrix(op):
    if isinstance(op, (SAOperator, TiltedOperator)):
        return op.matrix
    return np.asarray(op, dtype=float)


def tilted_operator(op: SAOperator, reward, beta: float) -> TiltedOperator:
    """Scale source column (s, a) of the chain by ``exp(beta * r(s, a))``."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    reward = np.asarray(reward, dtype=float)
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward must be finite")
    matrix = _matrix(op) * np.exp(beta * reward)[None, :]
    return TiltedOperator(matrix, float(beta))


def normalize_pair(u, v):
    """Rescale (u, v) so that ``sum(u) == n`` and ``sum(u * v) == 1``."""
    u = u * (u.size / u.sum())
    v = v / (u @ v)
    return u, v


def dominant_eigenpair(tilted, tol: float = 1e-12, max_iter: int = 64) -> EigenPair:
    """Perron eigenpair by simultaneous power iteration on ``A`` and ``A.T``.

    Each round applies the current operator to both iterates, renormalizes,
    and then squares the operator, so round k advances the plain power
    method by 2**k steps. ``max_iter`` caps the number of rounds.
    Residuals are measured relative to ``lam * max(vector)`` so that they
    do not depend on the overall scale of the matrix.
    """
    a = _matrix(tilted)
    try:
        index_of_primitivity(a)
    except ImprimitiveError as exc:
        raise ImprimitiveError(f"dominant_eigenpair: {exc}") from None
    n = a.shape[0]
    u = np.ones(n)
    v = np.ones(n)
    m = a / a.max()
    res = math.inf
    for k in range(max_iter):
        v = m @ v
        u = m.T @ u
        v /= v.sum()
        u /= u.sum()
        if u.min() > 0 and v.min() > 0:
            av = a @ v
            ua = u @ a
            lam = (u @ av) / (u @ v)
            res = max(
                np.max(np.abs(av - lam * v)) / np.max(v),
                np.max(np.abs(ua - lam * u)) / np.max(u),
            ) / lam
            if res <= tol:
                u, v = normalize_pair(u, v)
                return EigenPair(float(lam), u, v)
        m = m @ m
        m /= m.max()
    raise ConvergenceError(f"dominant_eigenpair did not converge (residual {res:.3e})", res, max_iter)


def stationary_distribution(op, tol: float = 1e-13, max_iter: int = 64) -> np.ndarray:
    """Fixed point of a column-stochastic chain, ``P d = d`` with ``sum(d) == 1``.

    Power iteration from the uniform vector with operator squaring between
    rounds; convergence is always judged on the one-step residual
    ``||P d - d||_1``. Chains that are ergodic but mix too slowly for the
    squared iterates (near-deterministic policies) fall back to a dense
    solve of ``(P - I) d = 0, sum(d) = 1``.
    """
    p = _matrix(op)
    n = p.shape[0]
    d = np.full(n, 1.0 / n)
    m = p
    res = math.inf
    for k in range(max_iter):
        res = np.abs(p @ d - d).sum()
        if res <= tol:
            return d
        d = p @ (m @ d)
        d /= d.sum()
        m = m @ m
        m /= m.sum(axis=0, keepdims=True)
    if not is_ergodic(p):
        raise ImprimitiveError("stationary_distribution: chain has no unique aperiodic recurrent class")
    d = _stationary_solve(p)
    res = np.abs(p @ d - d).sum()
    if res <= max(tol, 1e-12):
        return d
    raise ConvergenceError(f"stationary_distribution did not converge (residual {res:.3e})", res, max_iter)


def _stationary_solve(p):
    n = p.shape[0]
    system = p - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    d = np.linalg.solve(system, rhs)
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def entropy(d) -> float:
    """Shannon entropy in nats with ``0 log 0 = 0``."""
    d = np.asarray(d, dtype=float)
    if d.size and d.min() < 0:
        raise ValueError("distribution has negative entries")
    return float(entr(d).sum())


def hilbert_metric(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("hilbert_metric: shape mismatch")
    if not (np.all(x > 0) and np.all(y > 0)):
        raise ValueError("hilbert_metric requires strictly positive vectors")
    log_ratio = np.log(x) - np.log(y)
    return float(log_ratio.max() - log_ratio.min())


def projective_diameter(m) -> float:
    """Largest Hilbert distance between two columns of ``m``.

    Returns ``math.inf`` if ``m`` has a zero entry.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("projective_diameter requires a nonnegative matrix")
    if np.any(m == 0):
        return math.inf
    logs = np.log(m)
    diff = logs[:, :, None] - logs[:, None, :]
    return float(np.max(diff.max(axis=0) - diff.min(axis=0)))


def birkhoff_coefficient(m) -> float:
    """Contraction ratio ``tanh(diameter / 4)`` of ``x -> m x`` in the Hilbert metric."""
    return math.tanh(projective_diameter(m) / 4.0)
