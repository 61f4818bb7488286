"""EVE: self-consistent eigenvector iteration for maximum-entropy exploration.

The potential ``u`` is the left Perron vector of the chain tilted by the
self-consistent reward ``r = -log(u * v)``. Eliminating the right vector
``v`` gives a homogeneous, order-preserving map on the positive orthant,
iterated here to its projective fixed point. Posterior policy iteration
then replaces the prior with the resulting policy until the two agree.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, ImprimitiveError, InvalidSpecError
from .mdp import SAOperator, TabularMDP, sa_operator, validate_policy
from .spectral import entropy, hilbert_metric, stationary_distribution, tilted_operator

log = logging.getLogger(__name__)


def _matrix(op):
    return op.matrix if isinstance(op, SAOperator) else np.asarray(op, dtype=float)


def eve_operator(u, op, beta: float) -> np.ndarray:
    """Unnormalized EVE map.

    ``op`` may be the one-step chain or any power of it. With ``P`` indexed
    ``[dest, source]``::

        T(u)_j = ( (P.T u)_j^(1/b) / sum_i P_ji u_i^(-1/b) (P.T u)_i^((1-b)/b) )^(b/(1+b))
    """
    p = _matrix(op)
    u = np.asarray(u, dtype=float)
    forward = p.T @ u
    if not np.all(forward > 0):
        raise ImprimitiveError("eve_operator: a state-action pair has no successor mass")
    inner = u ** (-1.0 / beta) * forward ** ((1.0 - beta) / beta)
    backward = p @ inner
    if not np.all(backward > 0):
        raise ImprimitiveError("eve_operator: a state-action pair has no predecessor")
    return (forward ** (1.0 / beta) / backward) ** (beta / (1.0 + beta))


def eve_step(u, op, beta: float) -> np.ndarray:
    """One EVE update, rescaled so that ``sum(u) == n``."""
    out = eve_operator(u, op, beta)
    return out * (out.size / out.sum())


def q_step(q, op) -> np.ndarray:
    """Log-space EVE update at unit inverse temperature.

    Half the soft maximum over successors minus half the soft minimum over
    predecessors. Equal to ``log(eve_operator(exp(q), op, 1))``.
    """
    p = _matrix(op)
    q = np.asarray(q, dtype=float)
    out_flow = logsumexp(np.broadcast_to(q[:, None], p.shape), b=p, axis=0)
    in_flow = logsumexp(np.broadcast_to(-q[None, :], p.shape), b=p, axis=1)
    return 0.5 * out_flow - 0.5 * in_flow


@dataclass
class FixedPointInfo:
    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.residuals)

    @property
    def contraction_ratios(self):
        r = np.asarray(self.residuals)
        r = r[r > 0]
        return r[1:] / r[:-1]

    def tail_ratio(self, window=10):
        """Geometric-mean residual ratio over the last ``window`` steps."""
        r = np.asarray(self.residuals)
        r = r[r > 0]
        if r.size < 2:
            return 0.0
        k = min(window, r.size - 1)
        return float((r[-1] / r[-1 - k]) ** (1.0 / k))


def solve_fixed_point(op, beta: float, tol: float = 1e-10, max_iter: int = 10_000, u0=None):
    """Iterate ``eve_step`` until ``d_H(T u, u) <= tol``.

    Returns ``(u, info)``; raises ConvergenceError after ``max_iter`` steps.
    """
    if beta < 1:
        raise InvalidSpecError(f"beta must be >= 1, got {beta}", field="beta")
    p = _matrix(op)
    u = np.ones(p.shape[0]) if u0 is None else np.asarray(u0, dtype=float)
    u = u * (u.size / u.sum())
    info = FixedPointInfo()
    for _ in range(max_iter):
        nxt = eve_step(u, p, beta)
        res = hilbert_metric(nxt, u)
        info.residuals.append(res)
        u = nxt
        if res <= tol:
            info.converged = True
            return u, info
    raise ConvergenceError(
        f"EVE fixed point not reached after {max_iter} iterations (residual {res:.3e})",
        residual=res,
        iterations=max_iter,
    )


def recover_right_eigenvector(u, op, beta: float) -> np.ndarray:
    """Right vector from the left one, scaled so ``sum(u * v) == 1``."""
    p = _matrix(op)
    u = np.asarray(u, dtype=float)
    v = ((p.T @ u) / u ** (beta + 1.0)) ** (1.0 / beta)
    if not np.all(v > 0):
        raise ImprimitiveError("recover_right_eigenvector: nonpositive entry")
    return v / (u @ v)


def reward_from_uv(u, v) -> np.ndarray:
    d = np.asarray(u) * np.asarray(v)
    return -np.log(d / d.sum())


class LambdaTheta(NamedTuple):
    lam: float
    theta_star: float
    spread: float


def perron_ratio(u, matrix):
    """Mean of ``(u^T A)_j / u_j`` and its relative spread across ``j``."""
    u = np.asarray(u, dtype=float)
    ratios = (u @ _matrix(matrix)) / u
    lam = float(ratios.mean())
    return lam, float((ratios.max() - ratios.min()) / lam)


def _lambda_theta(u, v, op, beta):
    tilted = tilted_operator(op, reward_from_uv(u, v), beta)
    lam, spread = perron_ratio(u, tilted.matrix)
    return LambdaTheta(lam, math.log(lam) / beta, spread)


def extract_lambda_theta(u, v, op, beta: float, max_spread: float = 1e-4) -> LambdaTheta:
    """Perron value of the self-consistent tilted chain and ``theta* = log(lam) / beta``.

    ``lam`` is read off the componentwise ratio ``(u^T A)_j / u_j``; its
    relative spread is returned and must stay below ``max_spread``.
    """
    out = _lambda_theta(np.asarray(u, float), np.asarray(v, float), op, beta)
    if out.spread > max_spread:
        raise ConvergenceError(f"eigenvalue ratios spread by {out.spread:.3e}; u is not a fixed point", out.spread)
    return out


def extract_policy(u, pi0) -> np.ndarray:
    pi0 = np.asarray(pi0, dtype=float)
    w = pi0 * np.asarray(u, dtype=float).reshape(pi0.shape)
    return w / w.sum(axis=1, keepdims=True)


BetaSchedule = Callable[[int], float]


def constant_schedule(beta: float) -> BetaSchedule:
    return lambda t: float(beta)


def linear_schedule(start: float, stop: float, horizon: int) -> BetaSchedule:
    """Linear ramp from ``start`` at t=1 to ``stop`` at t=horizon."""

    def schedule(t):
        if horizon <= 1:
            return float(stop)
        frac = min(max((t - 1) / (horizon - 1), 0.0), 1.0)
        return start + frac * (stop - start)

    return schedule


def parse_schedule(text: str, horizon: int) -> BetaSchedule:
    """``"2"`` for a constant or ``"linear:START:STOP"`` for a ramp over ``horizon``."""
    try:
        if text.startswith("linear:"):
            _, a, b = text.split(":")
            return linear_schedule(float(a), float(b), horizon)
        return constant_schedule(float(text))
    except ValueError:
        raise InvalidSpecError(f"cannot parse beta schedule {text!r}", field="beta") from None


@dataclass
class EveConfig:
    beta_schedule: BetaSchedule | float = 1.0
    inner_iters: int = 200
    ppi_iters: int = 30
    fixed_point_tol: float = 1e-10
    use_log_space: bool = False
    ppi_tol: float = 1e-9

    def __post_init__(self):
        if not callable(self.beta_schedule):
            self.beta_schedule = constant_schedule(self.beta_schedule)
        if not isinstance(self.inner_iters, int) or self.inner_iters < 1:
            raise InvalidSpecError("inner_iters must be a positive integer", field="inner_iters")
        if not isinstance(self.ppi_iters, int) or self.ppi_iters < 1:
            raise InvalidSpecError("ppi_iters must be a positive integer", field="ppi_iters")
        if not self.fixed_point_tol > 0:
            raise InvalidSpecError("fixed_point_tol must be positive", field="tol")
        for t in range(1, self.ppi_iters + 1):
            b = self.beta(t)
            if not b >= 1:
                raise InvalidSpecError(f"beta({t}) = {b} < 1 is not supported", field="beta")
            if self.use_log_space and b != 1:
                raise InvalidSpecError("log-space updates require beta == 1", field="beta")

    def beta(self, t: int) -> float:
        return float(self.beta_schedule(t))


@dataclass
class PPIRecord:
    t: int
    beta: float
    lam: float
    theta_star: float
    entropy_uv: float
    entropy_stationary: float
    residual: float
    inner_iters: int
    steps: int
    uv_gap: float


TRACE_COLUMNS = [f.name for f in fields(PPIRecord)]


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    ppi_converged: bool = False
    failure: str | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow([format_value(getattr(r, c)) for c in TRACE_COLUMNS])


def format_value(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def run_ppi(mdp: TabularMDP, pi0_init, cfg: EveConfig, u0=None, on_step=None):
    """Posterior policy iteration around the EVE fixed point.

    Each outer iteration runs up to ``cfg.inner_iters`` EVE updates (warm
    started, stopping early once the Hilbert residual drops below
    ``cfg.fixed_point_tol``), extracts the posterior policy and makes it the
    next prior. Stops early when consecutive fixed points are within
    ``cfg.ppi_tol``.

    ``on_step(step, u, pi0, residual)`` is called after every EVE update.
    Returns ``(policy, trace)``; ``trace.failure`` is set if a step raised.
    """
    pi0 = validate_policy(pi0_init, mdp).copy()
    n = mdp.n_pairs
    u = np.ones(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    u *= n / u.sum()
    trace = RunTrace()
    steps = 0
    prev_fixed = None

    for t in range(1, cfg.ppi_iters + 1):
        beta = cfg.beta(t)
        try:
            op = sa_operator(mdp, pi0)
            res = math.inf
            used = 0
            for _ in range(cfg.inner_iters):
                if cfg.use_log_space:
                    q = q_step(np.log(u), op)
                    nxt = np.exp(q - q.max())
                    nxt *= n / nxt.sum()
                else:
                    nxt = eve_step(u, op, beta)
                res = hilbert_metric(nxt, u)
                u = nxt
                used += 1
                steps += 1
                if on_step is not None:
                    on_step(steps, u, pi0, res)
                if res <= cfg.fixed_point_tol:
                    break

            v = recover_right_eigenvector(u, op, beta)
            lam = _lambda_theta(u, v, op, beta)
            policy = extract_policy(u, pi0)
            d_uv = u * v
            d_stat = stationary_distribution(sa_operator(mdp, policy))
        except (ImprimitiveError, ConvergenceError, FloatingPointError) as exc:
            trace.failure = f"t={t}: {exc}"
            log.error("PPI failed at iteration %d: %s", t, exc)
            break

        gap = float(np.abs(d_uv - d_stat).sum())
        if gap > 1e-6 and res <= cfg.fixed_point_tol:
            log.warning("t=%d: |u*v - d_pi|_1 = %.3e", t, gap)
        trace.records.append(
            PPIRecord(
                t=t,
                beta=beta,
                lam=lam.lam,
                theta_star=lam.theta_star,
                entropy_uv=entropy(d_uv),
                entropy_stationary=entropy(d_stat),
                residual=res,
                inner_iters=used,
                steps=steps,
                uv_gap=gap,
            )
        )
        trace.converged = res <= cfg.fixed_point_tol
        trace.u, trace.v = u.copy(), v.copy()
        pi0 = policy
        if prev_fixed is not None and hilbert_metric(u, prev_fixed) <= cfg.ppi_tol:
            trace.ppi_converged = True
            break
        prev_fixed = u.copy()

    return pi0, trace
