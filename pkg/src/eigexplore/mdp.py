"""Deterministic tabular MDPs, policies and the induced state-action chain.

Flat state-action index is ``s * n_actions + a``. Chain matrices are
column-stochastic: ``P[(s', a'), (s, a)] = p(s'|s, a) * pi0(a'|s')`` so that
columns are sources and rows are destinations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import ImprimitiveError, InvalidSpecError

ACTIONS = ("up", "down", "left", "right")
MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))


def _as_cell(value, name):
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(c, int) and not isinstance(c, bool) for c in value)
    ):
        raise InvalidSpecError(f"{name}: expected [x, y] integer pair, got {value!r}", field=name)
    return (int(value[0]), int(value[1]))


@dataclass(frozen=True)
class GridSpec:
    """Grid layout. Coordinates are zero-based, x rightward, y upward.

    With ``cliff_states=False`` cliff cells are not states: stepping into one
    lands on ``start``. With ``cliff_states=True`` they are ordinary states
    whose every action returns to ``start``.
    """

    width: int
    height: int
    start: tuple[int, int]
    cliff_cells: frozenset = field(default_factory=frozenset)
    wall_cells: frozenset = field(default_factory=frozenset)
    cliff_states: bool = False

    def __post_init__(self):
        for name in ("width", "height"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InvalidSpecError(f"{name} must be a positive integer, got {v!r}", field=name)
        object.__setattr__(self, "start", _as_cell(self.start, "start"))
        object.__setattr__(self, "cliff_cells", frozenset(_as_cell(c, "cliff") for c in self.cliff_cells))
        object.__setattr__(self, "wall_cells", frozenset(_as_cell(c, "walls") for c in self.wall_cells))

        for name, cells in (("start", [self.start]), ("cliff", self.cliff_cells), ("walls", self.wall_cells)):
            for c in cells:
                if not self.in_bounds(c):
                    raise InvalidSpecError(f"{name}: cell {list(c)} is outside the {self.width}x{self.height} grid", field=name)
        if self.cliff_cells & self.wall_cells:
            raise InvalidSpecError("cliff and walls overlap", field="cliff")
        if self.start in self.cliff_cells:
            raise InvalidSpecError("start lies inside the cliff", field="start")
        if self.start in self.wall_cells:
            raise InvalidSpecError("start lies inside a wall", field="start")

    def in_bounds(self, cell):
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidSpecError("environment must be a JSON object", field="env")
        for key in ("width", "height", "start"):
            if key not in data:
                raise InvalidSpecError(f"missing required key {key!r}", field=key)
        for key in ("cliff", "walls"):
            if not isinstance(data.get(key, []), list):
                raise InvalidSpecError(f"{key} must be a list of [x, y] pairs", field=key)
        return cls(
            width=data["width"],
            height=data["height"],
            start=data["start"],
            cliff_cells=frozenset(_as_cell(c, "cliff") for c in data.get("cliff", [])),
            wall_cells=frozenset(_as_cell(c, "walls") for c in data.get("walls", [])),
            cliff_states=bool(data.get("cliff_states", False)),
        )

    def to_dict(self):
        out = {
            "width": self.width,
            "height": self.height,
            "start": list(self.start),
            "cliff": [list(c) for c in sorted(self.cliff_cells)],
            "walls": [list(c) for c in sorted(self.wall_cells)],
        }
        if self.cliff_states:
            out["cliff_states"] = True
        return out

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"malformed JSON in {path}: {exc}", field="env") from exc
        return cls.from_dict(data)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def cliffworld():
    """Default CliffWorld: 6x4, start bottom-left, cliff along the rest of the bottom row."""
    return GridSpec(
        width=6,
        height=4,
        start=(0, 0),
        cliff_cells=frozenset((x, 0) for x in range(1, 6)),
    )


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Deterministic MDP given by a successor table ``next_state[s, a]``."""

    next_state: np.ndarray
    initial_state: int = 0
    cells: tuple | None = None

    def __post_init__(self):
        table = np.array(self.next_state, dtype=np.int64)
        if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
            raise InvalidSpecError("next_state must be a non-empty |S| x |A| table", field="next_state")
        if table.min() < 0 or table.max() >= table.shape[0]:
            raise InvalidSpecError("next_state entries must be valid state indices", field="next_state")
        if not 0 <= self.initial_state < table.shape[0]:
            raise InvalidSpecError("initial_state out of range", field="initial_state")
        table.setflags(write=False)
        object.__setattr__(self, "next_state", table)

    @property
    def n_states(self):
        return self.next_state.shape[0]

    @property
    def n_actions(self):
        return self.next_state.shape[1]

    @property
    def n_pairs(self):
        return self.n_states * self.n_actions

    def flat(self, s, a):
        return s * self.n_actions + a

    def state_graph(self):
        """Boolean |S| x |S| adjacency, ``[s, s']`` true when some action moves s to s'."""
        adj = np.zeros((self.n_states, self.n_states), dtype=bool)
        rows = np.repeat(np.arange(self.n_states), self.n_actions)
        adj[rows, self.next_state.ravel()] = True
        return adj


def _strongly_connected(adjacency):
    n, _ = connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    return n == 1


def build_gridworld(spec: GridSpec) -> TabularMDP:
    """Four-action deterministic gridworld; walls and edges are self-loops."""
    skip = set(spec.wall_cells)
    if not spec.cliff_states:
        skip |= spec.cliff_cells
    cells = [(x, y) for y in range(spec.height) for x in range(spec.width) if (x, y) not in skip]
    index = {c: i for i, c in enumerate(cells)}
    start = index[spec.start]

    table = np.empty((len(cells), len(MOVES)), dtype=np.int64)
    for s, (x, y) in enumerate(cells):
        for a, (dx, dy) in enumerate(MOVES):
            if (x, y) in spec.cliff_cells:
                table[s, a] = start
                continue
            target = (x + dx, y + dy)
            if not spec.in_bounds(target) or target in spec.wall_cells:
                table[s, a] = s
            elif target in spec.cliff_cells and not spec.cliff_states:
                table[s, a] = start
            else:
                table[s, a] = index[target]

    mdp = TabularMDP(table, initial_state=start, cells=tuple(cells))
    if not _strongly_connected(mdp.state_graph()):
        raise InvalidSpecError("grid is not strongly connected; the induced chain would be reducible", field="walls")
    return mdp


def uniform_policy(mdp: TabularMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def validate_policy(probs, mdp: TabularMDP | None = None, atol=1e-12) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise InvalidSpecError("policy must be a |S| x |A| matrix", field="policy")
    if mdp is not None and probs.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidSpecError(
            f"policy shape {probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})",
            field="policy",
        )
    if not np.all(np.isfinite(probs)) or probs.min() < 0:
        raise InvalidSpecError("policy entries must be finite and nonnegative", field="policy")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > atol:
        raise InvalidSpecError("policy rows must sum to 1", field="policy")
    return probs


@dataclass(frozen=True, eq=False)
class SAOperator:
    """Column-stochastic state-action chain under a fixed policy."""

    matrix: np.ndarray
    n_states: int
    n_actions: int

    @property
    def n(self):
        return self.matrix.shape[0]

    def flat(self, s, a):
        return s * self.n_actions + a

    def unflat(self, i):
        return divmod(i, self.n_actions)


def sa_operator(mdp: TabularMDP, pi0) -> SAOperator:
    pi0 = validate_policy(pi0, mdp)
    n = mdp.n_pairs
    matrix = np.zeros((n, n))
    src = np.arange(n)
    succ = mdp.next_state.ravel()
    for a_next in range(mdp.n_actions):
        matrix[succ * mdp.n_actions + a_next, src] = pi0[succ, a_next]
    matrix.setflags(write=False)
    return SAOperator(matrix, mdp.n_states, mdp.n_actions)


def _support(op):
    m = op.matrix if isinstance(op, SAOperator) else np.asarray(op)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if np.any(m < 0):
        raise ValueError("expected a nonnegative matrix")
    return m > 0


def _period(adjacency, nodes=None):
    """Period of a strongly connected digraph given as ``adj[src, dst]``."""
    if nodes is not None:
        adjacency = adjacency[np.ix_(nodes, nodes)]
    order, pred = breadth_first_order(csr_matrix(adjacency), 0, directed=True)
    level = np.full(adjacency.shape[0], -1)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    src, dst = np.nonzero(adjacency)
    return reduce(math.gcd, (int(d) for d in np.abs(level[src] + 1 - level[dst])), 0)


def index_of_primitivity(op) -> int:
    """Smallest m with an all-positive m-th power of the support.

    Raises ImprimitiveError for reducible or periodic supports. Powers are
    iterated up to the Wielandt bound ``(n - 1)**2 + 1``.
    """
    support = _support(op)
    n = support.shape[0]
    adjacency = support.T
    if not _strongly_connected(adjacency):
        raise ImprimitiveError("imprimitive: chain is reducible")
    period = _period(adjacency)
    if period > 1:
        raise ImprimitiveError(f"imprimitive: chain has period {period}")

    base = support.astype(float)
    power = support
    bound = (n - 1) ** 2 + 1
    m = 1
    while not power.all():
        m += 1
        if m > bound:
            raise ImprimitiveError("imprimitive: Wielandt bound exceeded")
        power = (power.astype(float) @ base) > 0
    return m


def is_ergodic(op) -> bool:
    """True when the chain has a single closed class and that class is aperiodic.

    This is weaker than primitivity: transient pairs are allowed, which is
    what a deterministic policy on a gridworld produces.
    """
    support = _support(op)
    adjacency = support.T
    n_comp, labels = connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    src, dst = np.nonzero(adjacency)
    leaves = set(range(n_comp)) - {labels[i] for i, j in zip(src, dst) if labels[i] != labels[j]}
    if len(leaves) != 1:
        return False
    nodes = np.flatnonzero(labels == leaves.pop())
    return _period(adjacency, nodes) == 1


def support_equal(pi_a, pi_b) -> bool:
    pi_a, pi_b = np.asarray(pi_a), np.asarray(pi_b)
    return pi_a.shape == pi_b.shape and bool(np.array_equal(pi_a > 0, pi_b > 0))
