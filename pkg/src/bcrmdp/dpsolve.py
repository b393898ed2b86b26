"""Finite-horizon dynamic programming over the augmented state (s, belief node).

The stage recursion is

    V_t(s, n) = min_a  outer_theta( inner_xi[ C_t(s,a,xi) + gamma V_{t+1}(g_t(s,a,xi), n'(xi)) ] )

where the outer measure runs over a finite quadrature of the posterior at
node ``n`` and ``n'(xi)`` is the nearest node of the next level to the exact
Bayes update. Belief models hide how nodes, quadratures and successors are
built, so the same engine serves conjugate grids, Dirac beliefs, fixed
theta-sets and the posterior predictive.

Cost and transition callables must broadcast over numpy arrays: they are
called once per stage with ``s`` and ``a`` of shape (P, 1) and ``xi`` of shape
(1, J).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .bayes import ConjugateFamily, Truncation
from .hypergrid import GridLevel
from .riskcore import BcrSpec, DiscreteDist, Expectation, composite, evaluate

log = logging.getLogger(__name__)

_CHUNK = 4_000_000


class BoundaryError(RuntimeError):
    """A transition left the state grid by more than one grid spacing."""


@dataclass
class ProblemSpec:
    states: Union[Sequence[float], Callable[[int], Sequence[float]]]
    actions: Callable[[float], Sequence[float]]
    cost: Callable
    transition: Callable
    terminal_cost: Callable[[np.ndarray], np.ndarray]
    horizon: int | None
    bcr: Union[BcrSpec, Callable[[int], BcrSpec]]
    gamma: float = 1.0
    family: ConjugateFamily | None = None
    truncation: Truncation = field(default_factory=Truncation)
    post_decision: Callable | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"discount gamma must lie in (0,1], got {self.gamma}")
        if self.horizon is not None and self.horizon < 2:
            raise ValueError("finite horizon must be >= 2")

    def state_grid(self, t: int) -> np.ndarray:
        S = self.states(t) if callable(self.states) else self.states
        return np.asarray(S, dtype=float)

    def bcr_at(self, t: int) -> BcrSpec:
        return self.bcr(t) if callable(self.bcr) else self.bcr


# --- belief models ----------------------------------------------------------

class BeliefModel:
    """Nodes per stage, their theta-quadrature and their successor maps."""

    xi: np.ndarray

    def n_nodes(self, t: int) -> int:
        raise NotImplementedError

    def kernel(self, t: int, node: int):
        """(L, w): row-normalized P_theta masses over ``xi`` and theta weights."""
        raise NotImplementedError

    def successors(self, t: int) -> np.ndarray:
        """Node index at stage t+1 for every (node, xi) pair."""
        raise NotImplementedError

    def locate(self, t: int, hyper) -> int:
        return 0


def _normalize_rows(L: np.ndarray) -> np.ndarray:
    s = L.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("truncated support carries no mass for some theta")
    return L / s


class ConjugateBeliefs(BeliefModel):
    """Grid levels of conjugate hyper-parameters.

    With ``stationary=True`` a single level is used at every stage and
    successors project back onto it.
    """

    def __init__(self, family: ConjugateFamily, levels, truncation: Truncation | None = None,
                 k_theta: int = 64, rule: str = "quantile", stationary: bool = False):
        if isinstance(levels, GridLevel):
            levels = [levels]
        self.family = family
        self.levels = list(levels)
        self.stationary = stationary
        self.truncation = truncation or Truncation()
        self.k_theta = k_theta
        self.rule = rule
        self._quad = [[family.theta_quadrature(h, k_theta, rule) for h in lv.hypers]
                      for lv in self.levels]
        atoms = np.concatenate([np.ravel(q[0]) for lq in self._quad for q in lq])
        self.xi = family.obs_support(atoms, self.truncation)
        self._kernels: dict = {}
        self._succ: dict = {}

    def _level(self, t: int) -> int:
        return 0 if self.stationary else t - 1

    def level(self, t: int) -> GridLevel:
        return self.levels[self._level(t)]

    def n_nodes(self, t):
        return len(self.level(t))

    def kernel(self, t, node):
        key = (self._level(t), node)
        if key not in self._kernels:
            thetas, w = self._quad[key[0]][node]
            L = _normalize_rows(self.family.likelihood(thetas, self.xi))
            self._kernels[key] = (L, np.asarray(w, dtype=float))
        return self._kernels[key]

    def successors(self, t):
        k = self._level(t)
        if k not in self._succ:
            src = self.levels[k]
            dst = src if self.stationary else self.levels[k + 1]
            hs = np.array([[self.family.update(h, x) for x in self.xi] for h in src.hypers])
            flat = dst.rep_many(hs.reshape(-1, hs.shape[-1]))
            self._succ[k] = flat.reshape(len(src), self.xi.size)
        return self._succ[k]

    def locate(self, t, hyper):
        return self.level(t).rep(hyper)


class StaticThetaBeliefs(BeliefModel):
    """A fixed finite theta-set that is never updated.

    Exact for a Dirac belief and for an outer essential supremum, whose value
    depends on the posterior only through its support, which Bayes updates on
    a finite set leave unchanged.
    """

    def __init__(self, family: ConjugateFamily, thetas, weights=None,
                 truncation: Truncation | None = None):
        self.family = family
        self.thetas = np.asarray(thetas, dtype=float)
        if self.thetas.ndim == 0:
            self.thetas = self.thetas[None]
        K = self.thetas.shape[0]
        w = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
        self.weights = w / w.sum()
        self.truncation = truncation or Truncation()
        self.xi = family.obs_support(self.thetas, self.truncation)
        self._L = _normalize_rows(family.likelihood(self.thetas, self.xi))

    def n_nodes(self, t):
        return 1

    def kernel(self, t, node):
        return self._L, self.weights

    def successors(self, t):
        return np.zeros((1, self.xi.size), dtype=int)


def PointBeliefs(family: ConjugateFamily, theta, truncation: Truncation | None = None):
    """Dirac belief at ``theta``."""
    return StaticThetaBeliefs(family, [theta], None, truncation)


class PredictiveBeliefs(BeliefModel):
    """Frozen posterior predictive: one row of predictive masses, no updates."""

    def __init__(self, family: ConjugateFamily, hyper, truncation: Truncation | None = None,
                 xi=None):
        self.family = family
        self.truncation = truncation or Truncation()
        if xi is None:
            xi = family.predictive_support(hyper, self.truncation).atoms
        self.xi = np.asarray(xi, dtype=float)
        p = np.asarray(family.predictive_weights(hyper, self.xi), dtype=float)
        self._L = _normalize_rows(p[None, :])

    def n_nodes(self, t):
        return 1

    def kernel(self, t, node):
        return self._L, np.ones(1)

    def successors(self, t):
        return np.zeros((1, self.xi.size), dtype=int)


# --- batched BCR evaluation -------------------------------------------------

def inner_values(Z: np.ndarray, L: np.ndarray, spec) -> np.ndarray:
    """Inner risk of each row of ``Z`` under every row of ``L``: shape (B, K)."""
    if isinstance(spec, Expectation):
        return Z @ L.T
    B, J = Z.shape
    K = L.shape[0]
    order = np.argsort(Z, axis=1, kind="stable")
    Zs = np.take_along_axis(Z, order, axis=1)
    out = np.empty((B, K))
    step = max(1, _CHUNK // max(1, K * J))
    for lo in range(0, B, step):
        hi = min(B, lo + step)
        Ls = np.transpose(L[:, order[lo:hi]], (1, 0, 2))
        out[lo:hi] = spec.eval_sorted(Zs[lo:hi, None, :], Ls)
    return out


def outer_values(inner: np.ndarray, w: np.ndarray, spec) -> np.ndarray:
    if isinstance(spec, Expectation):
        return inner @ w
    if inner.shape[1] == 1:
        return inner[:, 0].copy()
    order = np.argsort(inner, axis=1, kind="stable")
    xs = np.take_along_axis(inner, order, axis=1)
    return spec.eval_sorted(xs, w[order])


_PROBE = np.random.default_rng(12345).standard_normal(4096) + 2.0


def _unique_rows(Z: np.ndarray):
    """(unique rows, inverse) when at most half the rows are distinct, else None.

    Rows are grouped by a random projection and the grouping is verified
    exactly; any collision falls back to no deduplication.
    """
    if Z.shape[1] > _PROBE.size:
        return None
    _, first, inv = np.unique(Z @ _PROBE[:Z.shape[1]], return_index=True, return_inverse=True)
    if first.size * 2 >= Z.shape[0]:
        return None
    inv = np.ravel(inv)
    Zu = Z[first]
    if not np.array_equal(Zu[inv], Z):
        return None
    return Zu, inv


def bcr_batch(Z: np.ndarray, L: np.ndarray, w: np.ndarray, bcr: BcrSpec) -> np.ndarray:
    sorting = not (isinstance(bcr.inner, Expectation) and isinstance(bcr.outer, Expectation))
    if sorting and Z.shape[0] > 64:
        # rows are evaluated independently, so repeated rows are evaluated once
        dedup = _unique_rows(Z)
        if dedup is not None:
            Zu, inv = dedup
            return outer_values(inner_values(Zu, L, bcr.inner), w, bcr.outer)[inv]
    return outer_values(inner_values(Z, L, bcr.inner), w, bcr.outer)


# --- stage tables -------------------------------------------------------------

def snap(values: np.ndarray, grid: np.ndarray):
    """Nearest grid index and snap distance; raises when off the grid."""
    idx = np.clip(np.searchsorted(grid, values), 1, max(1, grid.size - 1))
    if grid.size == 1:
        idx = np.zeros_like(values, dtype=int)
    else:
        left = grid[idx - 1]
        right = grid[idx]
        idx = np.where(np.abs(values - left) <= np.abs(right - values), idx - 1, idx)
    dist = np.abs(values - grid[idx])
    spacing = float(np.min(np.diff(grid))) if grid.size > 1 else 0.0
    worst = float(dist.max()) if dist.size else 0.0
    if worst > spacing + 1e-9:
        bad = values.ravel()[np.argmax(dist.ravel())]
        raise BoundaryError(f"successor state {bad!r} is {worst:.3g} away from the grid "
                            f"[{grid[0]!r}, {grid[-1]!r}]")
    return idx, worst


@dataclass
class StageTable:
    """Enumerated (state, action) pairs of one stage grouped by decision key."""

    pair_state: np.ndarray
    pair_action: np.ndarray
    pair_key: np.ndarray
    offset: np.ndarray
    cost: np.ndarray
    next_idx: np.ndarray
    starts: np.ndarray
    max_snap: float

    @property
    def n_pairs(self) -> int:
        return self.pair_state.size


def build_stage_table(problem: ProblemSpec, t: int, xi: np.ndarray,
                      S: np.ndarray | None = None, S_next: np.ndarray | None = None) -> StageTable:
    S = problem.state_grid(t) if S is None else S
    S_next = problem.state_grid(t + 1) if S_next is None else S_next
    ps, pa = [], []
    for i, s in enumerate(S):
        acts = np.sort(np.asarray(problem.actions(s), dtype=float))
        if acts.size == 0:
            raise ValueError(f"empty action set at state {s!r}")
        ps.append(np.full(acts.size, i))
        pa.append(acts)
    pair_state = np.concatenate(ps)
    pair_action = np.concatenate(pa)
    starts = np.flatnonzero(np.diff(pair_state, prepend=-1))
    s_col = S[pair_state][:, None]
    a_col = pair_action[:, None]
    x_row = xi[None, :]
    if problem.post_decision is None:
        keys = np.arange(pair_state.size)
        offset = np.zeros(pair_state.size)
        rep = keys
    else:
        key_vals, offset = problem.post_decision(S[pair_state], pair_action)
        key_vals = np.asarray(key_vals, dtype=float)
        offset = np.asarray(offset, dtype=float) * np.ones(pair_state.size)
        _, rep, keys = np.unique(key_vals, return_index=True, return_inverse=True)
        keys = np.asarray(keys).ravel()
    cost_all = np.broadcast_to(problem.cost(t, s_col, a_col, x_row), (pair_state.size, xi.size))
    nxt_all = np.broadcast_to(problem.transition(t, s_col, a_col, x_row), (pair_state.size, xi.size))
    if problem.post_decision is not None:
        resid = cost_all - offset[:, None]
        if not (np.allclose(resid, resid[rep][keys], atol=1e-9, rtol=0)
                and np.allclose(nxt_all, nxt_all[rep][keys], atol=1e-9, rtol=0)):
            raise ValueError("post_decision key does not determine cost residual and successor")
        cost = resid[rep]
        nxt = nxt_all[rep]
    else:
        cost = np.array(cost_all, dtype=float)
        nxt = nxt_all
    next_idx, worst = snap(np.asarray(nxt, dtype=float), S_next)
    if worst > 0:
        log.debug("stage %d: max snap distance %.3g", t, worst)
    return StageTable(pair_state, pair_action, keys, offset, np.asarray(cost, dtype=float),
                      next_idx, starts, worst)


def key_values(table: StageTable, V_next: np.ndarray, beliefs: BeliefModel, t: int,
               bcr: BcrSpec, gamma: float) -> np.ndarray:
    """BCR value of every decision key at every node: shape (n_keys, n_nodes)."""
    succ = beliefs.successors(t)
    n_nodes = beliefs.n_nodes(t)
    q = np.empty((table.cost.shape[0], n_nodes))
    for n in range(n_nodes):
        L, w = beliefs.kernel(t, n)
        Z = table.cost + gamma * V_next[table.next_idx, succ[n][None, :]]
        q[:, n] = bcr_batch(Z, L, w, bcr)
    return q


def pair_values(table: StageTable, q: np.ndarray) -> np.ndarray:
    return table.offset[:, None] + q[table.pair_key]


def minimize_pairs(table: StageTable, Q: np.ndarray):
    """Per-state minimum over actions with ties to the smallest action."""
    V = np.minimum.reduceat(Q, table.starts, axis=0)
    hit = Q == V[table.pair_state]
    idx = np.where(hit, np.arange(table.n_pairs)[:, None], table.n_pairs)
    first = np.minimum.reduceat(idx, table.starts, axis=0)
    return V, table.pair_action[first]


# --- solver -------------------------------------------------------------------

@dataclass
class DPSolution:
    """Value and policy tables; ``values[t-1]`` has shape (n_states_t, n_nodes_t)."""

    states: list
    values: list
    policy: list
    max_snap: float = 0.0

    def value(self, t: int, s: float, node: int = 0) -> float:
        i = int(np.argmin(np.abs(self.states[t - 1] - s)))
        return float(self.values[t - 1][i, node])

    def action(self, t: int, s: float, node: int = 0) -> float:
        i = int(np.argmin(np.abs(self.states[t - 1] - s)))
        return float(self.policy[t - 1][i, node])


def q_value(problem: ProblemSpec, t: int, s: float, node: int, a: float,
            V_next: np.ndarray, beliefs: BeliefModel) -> float:
    """Single augmented-state action value via explicit distribution objects."""
    xi = beliefs.xi
    S_next = problem.state_grid(t + 1)
    c = np.broadcast_to(problem.cost(t, np.array([[s]]), np.array([[a]]), xi[None, :]), (1, xi.size))[0]
    g = np.broadcast_to(problem.transition(t, np.array([[s]]), np.array([[a]]), xi[None, :]), (1, xi.size))[0]
    idx, _ = snap(np.asarray(g, dtype=float), S_next)
    succ = beliefs.successors(t)[node]
    z = c + problem.gamma * V_next[idx, succ]
    L, w = beliefs.kernel(t, node)
    bcr = problem.bcr_at(t)
    inner = []
    for row in L:
        keep = row > 0
        inner.append(evaluate(DiscreteDist.from_unnormalized(z[keep], row[keep]), bcr.inner))
    return composite(bcr.outer, DiscreteDist.from_unnormalized(inner, w))


def terminal_values(problem: ProblemSpec, beliefs: BeliefModel) -> np.ndarray:
    T = problem.horizon
    S = problem.state_grid(T)
    cT = np.asarray(problem.terminal_cost(S), dtype=float) * np.ones(S.size)
    return np.repeat(cT[:, None], beliefs.n_nodes(T), axis=1)


def bellman_stage(problem: ProblemSpec, t: int, V_next: np.ndarray, beliefs: BeliefModel,
                  table: StageTable | None = None):
    table = table or build_stage_table(problem, t, beliefs.xi)
    q = key_values(table, V_next, beliefs, t, problem.bcr_at(t), problem.gamma)
    return minimize_pairs(table, pair_values(table, q))


def solve_finite(problem: ProblemSpec, beliefs: BeliefModel, tables: dict | None = None) -> DPSolution:
    """Backward sweep t = T-1, ..., 1.

    ``tables`` caches stage tables by (t, xi); it may be shared between
    problems whose states, actions, costs and transitions coincide.
    """
    T = problem.horizon
    if T is None:
        raise ValueError("solve_finite needs a finite horizon")
    values = [None] * T
    policy = [None] * (T - 1)
    states = [problem.state_grid(t) for t in range(1, T + 1)]
    values[T - 1] = terminal_values(problem, beliefs)
    worst = 0.0
    for t in range(T - 1, 0, -1):
        key = (t, beliefs.xi.tobytes())
        if tables is not None and key in tables:
            table = tables[key]
        else:
            table = build_stage_table(problem, t, beliefs.xi, states[t - 1], states[t])
            if tables is not None:
                tables[key] = table
        worst = max(worst, table.max_snap)
        values[t - 1], policy[t - 1] = bellman_stage(problem, t, values[t], beliefs, table)
    return DPSolution(states, values, policy, worst)
