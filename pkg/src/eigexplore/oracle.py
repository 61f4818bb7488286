"""Ground-truth solvers used to check the spectral and EVE machinery.

Nothing here touches the EVE update: eigenpairs come from LAPACK and the
maximum-entropy occupancy comes from a convex dual solved by Newton's method.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ConvergenceError
from .mdp import TabularMDP, index_of_primitivity
from .spectral import EigenPair, entropy, normalize_pair


def dense_dominant_eigs(m) -> EigenPair:
    """Perron eigenpair from a full eigendecomposition.

    Same scaling as ``spectral.dominant_eigenpair``. Rejects imprimitive input.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[0] > 4096:
        raise ValueError("dense_dominant_eigs is limited to dimension 4096")
    index_of_primitivity(m)
    w, vr = np.linalg.eig(m)
    k = int(np.argmax(w.real))
    wl, vl = np.linalg.eig(m.T)
    kl = int(np.argmax(wl.real))
    v = np.abs(vr[:, k].real)
    u = np.abs(vl[:, kl].real)
    u, v = normalize_pair(u, v)
    return EigenPair(float(w[k].real), u, v)


@dataclass
class OccupancySolution:
    d_star: np.ndarray
    entropy_star: float
    constraint_violation: float
    n_states: int
    n_actions: int
    dual_trajectory: list = field(default_factory=list)

    @property
    def policy(self):
        d = self.d_star.reshape(self.n_states, self.n_actions)
        return d / d.sum(axis=1, keepdims=True)


def flow_violation(mdp: TabularMDP, d) -> float:
    """Largest |inflow - outflow| over states for a state-action vector ``d``."""
    d = np.asarray(d, dtype=float)
    outflow = d.reshape(mdp.n_states, mdp.n_actions).sum(axis=1)
    inflow = np.bincount(mdp.next_state.ravel(), weights=d, minlength=mdp.n_states)
    return float(np.max(np.abs(inflow - outflow)))


def max_entropy_occupancy(mdp: TabularMDP, tol: float = 1e-12, max_iter: int = 200) -> OccupancySolution:
    """Maximize H(d) over stationary state-action distributions.

    Solved through the dual ``min_psi log sum_{s,a} exp(psi[s'] - psi[s])``;
    the minimizer gives ``d*(s, a) proportional to exp(psi[s'] - psi[s])``.
    Damped Newton with backtracking; ``psi[initial_state]`` is pinned to 0.
    ``dual_trajectory`` holds the (nonincreasing) dual values, each an upper
    bound on the optimum.
    """
    s_idx = np.repeat(np.arange(mdp.n_states), mdp.n_actions)
    incidence = np.zeros((mdp.n_pairs, mdp.n_states))
    np.add.at(incidence, (np.arange(mdp.n_pairs), mdp.next_state.ravel()), 1.0)
    np.add.at(incidence, (np.arange(mdp.n_pairs), s_idx), -1.0)
    free = np.array([s for s in range(mdp.n_states) if s != mdp.initial_state], dtype=int)
    b = incidence[:, free]

    psi = np.zeros(free.size)

    def dual(x):
        return float(logsumexp(b @ x))

    value = dual(psi)
    trajectory = [value]
    for _ in range(max_iter):
        d = softmax(b @ psi)
        grad = b.T @ d
        if np.max(np.abs(grad), initial=0.0) <= tol:
            break
        hess = b.T @ (d[:, None] * b) - np.outer(grad, grad)
        step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = grad @ step
        alpha = 1.0
        while True:
            cand = dual(psi + alpha * step)
            if cand <= value + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        psi = psi + alpha * step
        value = min(cand, value)
        trajectory.append(value)
    d = softmax(b @ psi)
    violation = flow_violation(mdp, d)
    if violation > max(tol, 1e-10):
        raise ConvergenceError(f"occupancy oracle stalled with flow violation {violation:.3e}", violation, max_iter)
    return OccupancySolution(d, entropy(d), violation, mdp.n_states, mdp.n_actions, trajectory)


def _state_stationary_batch(mdp: TabularMDP, probs):
    """Stationary state distributions for a batch of policies ``probs[k, s, a]``.

    Solved densely: ``(P_k - I) mu = 0`` with the last equation replaced by
    ``sum(mu) = 1``. Singular systems yield NaN rows.
    """
    k = probs.shape[0]
    n = mdp.n_states
    trans = np.zeros((k, n, n))
    for s in range(n):
        for a in range(mdp.n_actions):
            trans[:, mdp.next_state[s, a], s] += probs[:, s, a]
    system = trans - np.eye(n)
    system[:, -1, :] = 1.0
    rhs = np.zeros((k, n))
    rhs[:, -1] = 1.0
    out = np.full((k, n), np.nan)
    ok = np.abs(np.linalg.det(system)) > 1e-12
    if ok.any():
        out[ok] = np.linalg.solve(system[ok], rhs[ok][..., None])[..., 0]
    return out


def _grid_entropies(mdp, grids):
    """Entropy of d_pi for every policy in the product of per-state grids (2 actions)."""
    pts = np.array(list(itertools.product(*grids)))
    probs = np.stack([pts, 1.0 - pts], axis=-1)
    mu = _state_stationary_batch(mdp, probs)
    d = mu[:, :, None] * probs
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.nansum(np.where(d > 0, d * np.log(d), 0.0), axis=(1, 2))
    h[np.isnan(mu).any(axis=1)] = -np.inf
    return pts, h


def grid_search_max_entropy(mdp: TabularMDP, resolution: float = 1e-3, coarse: float = 0.02):
    """Exhaustive policy search for MDPs with at most two actions.

    Each state's policy is one probability. The product grid is scanned at
    ``coarse`` spacing, then refined around the best point until the
    spacing reaches ``resolution``. Returns ``(best_entropy, best_probs)``.
    """
    if mdp.n_actions == 1:
        probs = np.ones((1, mdp.n_states, 1))
        mu = _state_stationary_batch(mdp, probs)[0]
        return entropy(mu), probs[0]
    if mdp.n_actions != 2:
        raise ValueError("grid search supports at most two actions")

    step = coarse
    grids = [np.arange(step / 2, 1.0, step)] * mdp.n_states
    pts, h = _grid_entropies(mdp, grids)
    best = pts[int(np.argmax(h))]
    while step > resolution:
        new_step = max(step / 10.0, resolution)
        grids = [
            np.clip(np.arange(c - step, c + step + new_step / 2, new_step), new_step / 2, 1 - new_step / 2)
            for c in best
        ]
        grids = [np.unique(g) for g in grids]
        pts, h = _grid_entropies(mdp, grids)
        best = pts[int(np.argmax(h))]
        step = new_step
    return float(h.max()), np.stack([best, 1 - best], axis=-1)
