"""Maximum-entropy exploration policies from tilted-operator eigenvectors."""

from .errors import ConvergenceError, ImprimitiveError, InvalidSpecError
from .eve import EveConfig, eve_step, q_step, run_ppi, solve_fixed_point
from .mdp import GridSpec, TabularMDP, build_gridworld, cliffworld, sa_operator, uniform_policy
from .oracle import max_entropy_occupancy
from .spectral import dominant_eigenpair, entropy, hilbert_metric, stationary_distribution

__all__ = [
    "ConvergenceError",
    "EveConfig",
    "GridSpec",
    "ImprimitiveError",
    "InvalidSpecError",
    "TabularMDP",
    "build_gridworld",
    "cliffworld",
    "dominant_eigenpair",
    "entropy",
    "eve_step",
    "hilbert_metric",
    "max_entropy_occupancy",
    "q_step",
    "run_ppi",
    "sa_operator",
    "solve_fixed_point",
    "stationary_distribution",
    "uniform_policy",
]
