"""Comparison methods: soft Q-iteration on visitation rewards and MaxEnt mixtures.

All visitation distributions are exact (``spectral.stationary_distribution``)
rather than estimated from rollouts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .errors import InvalidSpecError
from .eve import BetaSchedule, constant_schedule, linear_schedule
from .mdp import TabularMDP, sa_operator, uniform_policy, validate_policy
from .spectral import entropy, stationary_distribution

log = logging.getLogger(__name__)

VISITATION_FLOOR = 1e-12


def visitation_reward(d, floor: float = VISITATION_FLOOR) -> np.ndarray:
    return -np.log(np.maximum(np.asarray(d, dtype=float), floor))


def policy_distribution(mdp: TabularMDP, policy) -> np.ndarray:
    return stationary_distribution(sa_operator(mdp, policy))


def _soft_value(mdp, pi0, q, beta):
    """``V(s) = beta^-1 log sum_a pi0(a|s) exp(beta Q(s, a))`` for every state."""
    qs = q.reshape(mdp.n_states, mdp.n_actions)
    return logsumexp(beta * qs, b=pi0, axis=1) / beta


def boltzmann_policy(pi0, q, beta):
    pi0 = np.asarray(pi0)
    logits = beta * np.asarray(q).reshape(pi0.shape)
    logits -= logits.max(axis=1, keepdims=True)
    w = pi0 * np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def soft_q_discounted(mdp, pi0, r, gamma, beta, steps, q_init=None):
    """``steps`` synchronous backups ``Q <- r + gamma * V(s')``; returns ``(Q, policy)``."""
    if not 0 <= gamma < 1:
        raise InvalidSpecError("gamma must lie in [0, 1)", field="gamma")
    pi0 = validate_policy(pi0, mdp)
    r = np.asarray(r, dtype=float)
    q = np.zeros(mdp.n_pairs) if q_init is None else np.array(q_init, dtype=float)
    succ = mdp.next_state.ravel()
    for _ in range(steps):
        q = r + gamma * _soft_value(mdp, pi0, q, beta)[succ]
    return q, boltzmann_policy(pi0, q, beta)


def soft_q_differential(mdp, pi0, r, beta, steps, q_init=None, ref: int = 0, span_tol: float = 1e-8):
    """Relative soft value iteration for the average-reward problem.

    Each sweep computes ``TQ = r + V(s')``, takes ``rho = TQ[ref]`` and sets
    ``Q = TQ - rho``. Returns ``(Q, rho, policy)``; a warning is logged if the
    span of the last change exceeds ``span_tol``.
    """
    pi0 = validate_policy(pi0, mdp)
    r = np.asarray(r, dtype=float)
    q = np.zeros(mdp.n_pairs) if q_init is None else np.array(q_init, dtype=float)
    succ = mdp.next_state.ravel()
    rho = float(r[ref])
    change = 0.0
    for _ in range(steps):
        backed = r + _soft_value(mdp, pi0, q, beta)[succ]
        rho = float(backed[ref])
        nxt = backed - rho
        change = float(np.ptp(nxt - q))
        q = nxt
    if steps and change > span_tol:
        log.debug("soft_q_differential: span of last update %.3e after %d sweeps", change, steps)
    return q, rho, boltzmann_policy(pi0, q, beta)


@dataclass
class SoftQConfig:
    gamma: float | None = 0.99
    beta_schedule: BetaSchedule | None = None
    inner_steps: int = 50
    mix_rate: float | None = None
    outer_iters: int = 60

    def __post_init__(self):
        if self.gamma is not None and not 0 <= self.gamma < 1:
            raise InvalidSpecError("gamma must lie in [0, 1)", field="gamma")
        if self.mix_rate is None:
            self.mix_rate = 0.1 if self.gamma is not None else 0.05
        if not 0 < self.mix_rate <= 1:
            raise InvalidSpecError("mix_rate must lie in (0, 1]", field="mix_rate")
        if not isinstance(self.inner_steps, int) or self.inner_steps < 1:
            raise InvalidSpecError("inner_steps must be a positive integer", field="inner_steps")
        if not isinstance(self.outer_iters, int) or self.outer_iters < 1:
            raise InvalidSpecError("outer_iters must be a positive integer", field="outer_iters")
        if self.beta_schedule is None:
            self.beta_schedule = integer_ramp(1, 10, self.outer_iters)
        elif not callable(self.beta_schedule):
            self.beta_schedule = constant_schedule(self.beta_schedule)


def integer_ramp(start: int, stop: int, horizon: int) -> BetaSchedule:
    """Linear schedule through the integers ``start..stop`` over ``horizon`` outer iterations."""
    ramp = linear_schedule(start, stop, horizon)
    return lambda t: float(round(ramp(t)))


@dataclass
class BaselineRecord:
    t: int
    steps: int
    beta: float
    entropy: float
    residual: float


@dataclass
class BaselineTrace:
    records: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def reward_mixing_loop(mdp, cfg: SoftQConfig, mode: str = "discounted", pi0=None, q_init=None, on_step=None):
    """Rollout-free visitation-reward loop with reward mixing and warm starts.

    Outer iteration t: evaluate ``d`` of the current policy exactly, mix
    ``r <- (1 - eta) r + eta (-log d)``, run ``cfg.inner_steps`` soft-Q sweeps
    from the previous Q, and take the Boltzmann policy. ``on_step(step, q,
    policy)`` is called after every sweep. Returns ``(policy, trace)``.
    """
    if mode not in ("discounted", "differential"):
        raise InvalidSpecError(f"unknown mode {mode!r}", field="mode")
    if mode == "discounted" and cfg.gamma is None:
        raise InvalidSpecError("discounted mode needs gamma", field="gamma")
    prior = uniform_policy(mdp) if pi0 is None else validate_policy(pi0, mdp)
    q = np.zeros(mdp.n_pairs) if q_init is None else np.array(q_init, dtype=float)
    policy = prior
    reward = None
    trace = BaselineTrace()
    steps = 0
    for t in range(1, cfg.outer_iters + 1):
        beta = float(cfg.beta_schedule(t))
        fresh = visitation_reward(policy_distribution(mdp, policy))
        reward = fresh if reward is None else (1 - cfg.mix_rate) * reward + cfg.mix_rate * fresh
        change = 0.0
        for _ in range(cfg.inner_steps):
            if mode == "discounted":
                nxt, policy = soft_q_discounted(mdp, prior, reward, cfg.gamma, beta, 1, q)
                change = float(np.max(np.abs(nxt - q)))
            else:
                nxt, _, policy = soft_q_differential(mdp, prior, reward, beta, 1, q)
                change = float(np.ptp(nxt - q))
            q = nxt
            steps += 1
            if on_step is not None:
                on_step(steps, q, policy)
        h = entropy(policy_distribution(mdp, policy))
        trace.records.append(BaselineRecord(t, steps, beta, h, change))
    return policy, trace


@dataclass
class MixturePolicy:
    """Convex combination of policies; the mixture's visitation is the weighted sum."""

    components: list
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.components) != self.weights.size:
            raise ValueError("one weight per component")
        if self.weights.min() < 0 or abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("mixture weights must lie on the simplex")

    def distribution(self, mdp):
        return sum(w * policy_distribution(mdp, p) for p, w in zip(self.components, self.weights))


def harmonic_step(k: int, d_mix=None, d_new=None) -> float:
    """Classic Frank-Wolfe step ``2 / (k + 2)`` for the k-th added component (k >= 1)."""
    return 2.0 / (k + 2.0)


def line_search_step(k: int, d_mix, d_new) -> float:
    """Exact maximization of entropy along the segment toward ``d_new``."""
    res = minimize_scalar(
        lambda a: -entropy((1 - a) * d_mix + a * d_new), bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10}
    )
    a = float(res.x)
    if entropy((1 - a) * d_mix + a * d_new) < entropy(d_mix):
        return 0.0
    return a


STEP_RULES = {"harmonic": harmonic_step, "line_search": line_search_step}


def maxent_mixture(mdp, outer_iters: int = 60, step_rule="line_search", beta: float = 64.0,
                   inner_steps: int = 50, q_init=None, on_step=None):
    """Frank-Wolfe over occupancy measures with a soft-greedy planner.

    Starts from the uniform policy. Each iteration plans against
    ``r = -(1 + log d_mix)`` with high-beta differential soft-Q (warm
    started) and mixes the planner's policy into the mixture. Identical
    components are merged. Returns ``(mixture, trace)``.
    """
    rule = STEP_RULES[step_rule] if isinstance(step_rule, str) else step_rule
    prior = uniform_policy(mdp)
    components = [prior]
    weights = [1.0]
    dists = [policy_distribution(mdp, prior)]
    d_mix = dists[0]
    q = np.zeros(mdp.n_pairs) if q_init is None else np.array(q_init, dtype=float)
    trace = BaselineTrace()
    steps = 0
    for k in range(1, outer_iters + 1):
        reward = -(1.0 + np.log(np.maximum(d_mix, VISITATION_FLOOR)))
        for _ in range(inner_steps):
            q, rho, greedy = soft_q_differential(mdp, prior, reward, beta, 1, q)
            steps += 1
            if on_step is not None:
                on_step(steps, q, greedy)
        d_new = policy_distribution(mdp, greedy)
        alpha = float(rule(k, d_mix, d_new))
        weights = [w * (1 - alpha) for w in weights]
        for i, comp in enumerate(components):
            if np.array_equal(comp, greedy):
                weights[i] += alpha
                break
        else:
            components.append(greedy)
            weights.append(alpha)
            dists.append(d_new)
        d_mix = (1 - alpha) * d_mix + alpha * d_new
        gap = float(reward @ (d_new - d_mix))
        trace.records.append(BaselineRecord(k, steps, beta, entropy(d_mix), gap))
    w = np.asarray(weights)
    return MixturePolicy(components, w / w.sum()), trace
