"""Infinite-horizon value iteration over a stationary belief grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dpsolve import (BeliefModel, ProblemSpec, StageTable, build_stage_table, key_values,
                      minimize_pairs, pair_values)
from .riskcore import DiscreteDist, RiskSpec, evaluate


def stop_threshold(eps: float, gamma: float) -> float:
    return eps * (1.0 - gamma) / (2.0 * gamma)


def stationary_table(problem: ProblemSpec, beliefs: BeliefModel) -> StageTable:
    S = problem.state_grid(0)
    return build_stage_table(problem, 0, beliefs.xi, S, S)


def cost_bound(table: StageTable) -> float:
    """Largest |C| over the enumerated pairs and the truncated support."""
    return float(np.max(np.abs(table.offset[:, None] + table.cost[table.pair_key])))


def bellman_op(problem: ProblemSpec, V: np.ndarray, beliefs: BeliefModel,
               table: StageTable | None = None, with_policy: bool = False):
    table = table or stationary_table(problem, beliefs)
    q = key_values(table, V, beliefs, 0, problem.bcr_at(0), problem.gamma)
    TV, pi = minimize_pairs(table, pair_values(table, q))
    return (TV, pi) if with_policy else TV


def _policy_pairs(table: StageTable, policy: np.ndarray) -> np.ndarray:
    n_states, n_nodes = policy.shape
    idx = np.empty(policy.shape, dtype=int)
    ends = np.append(table.starts[1:], table.n_pairs)
    for i in range(n_states):
        acts = table.pair_action[table.starts[i]:ends[i]]
        pos = np.searchsorted(acts, policy[i])
        if np.any(pos >= acts.size) or np.any(acts[np.minimum(pos, acts.size - 1)] != policy[i]):
            raise ValueError(f"policy uses an action outside A(s) at state index {i}")
        idx[i] = table.starts[i] + pos
    return idx


def policy_op(problem: ProblemSpec, V: np.ndarray, policy: np.ndarray, beliefs: BeliefModel,
              table: StageTable | None = None, pairs: np.ndarray | None = None) -> np.ndarray:
    table = table or stationary_table(problem, beliefs)
    pairs = _policy_pairs(table, policy) if pairs is None else pairs
    q = key_values(table, V, beliefs, 0, problem.bcr_at(0), problem.gamma)
    Q = pair_values(table, q)
    return np.take_along_axis(Q, pairs, axis=0) if pairs.ndim == 2 else Q[pairs]


@dataclass
class VIResult:
    values: np.ndarray
    policy: np.ndarray
    iterations: int
    converged: bool
    threshold: float
    last_diff: float
    diffs: list

    @property
    def shape(self):
        return self.values.shape


def value_iterate(problem: ProblemSpec, eps: float, i_max: int, beliefs: BeliefModel,
                  V0: np.ndarray | None = None, table: StageTable | None = None) -> VIResult:
    """Iterate the Bellman operator until successive iterates differ by less than
    eps(1-gamma)/(2 gamma); the greedy policy of the last iterate is eps-optimal."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    gamma = problem.gamma
    if not gamma < 1.0:
        raise ValueError("value iteration needs gamma < 1")
    table = table or stationary_table(problem, beliefs)
    thr = stop_threshold(eps, gamma)
    n_states = problem.state_grid(0).size
    V = np.zeros((n_states, beliefs.n_nodes(0))) if V0 is None else np.array(V0, dtype=float)
    diffs = []
    converged = False
    it = 0
    diff = np.inf
    while it < i_max:
        V_new = bellman_op(problem, V, beliefs, table)
        diff = float(np.max(np.abs(V_new - V)))
        diffs.append(diff)
        V = V_new
        it += 1
        if diff < thr:
            converged = True
            break
    _, pi = bellman_op(problem, V, beliefs, table, with_policy=True)
    return VIResult(V, pi, it, converged, thr, diff, diffs)


def policy_value(problem: ProblemSpec, policy: np.ndarray, eps: float, beliefs: BeliefModel,
                 i_max: int = 10_000, table: StageTable | None = None) -> VIResult:
    """Fixed point of the policy operator, iterated from zero to the same threshold."""
    table = table or stationary_table(problem, beliefs)
    pairs = _policy_pairs(table, np.asarray(policy, dtype=float))
    thr = stop_threshold(eps, problem.gamma)
    V = np.zeros(pairs.shape)
    diffs = []
    converged = False
    it = 0
    diff = np.inf
    while it < i_max:
        V_new = policy_op(problem, V, policy, beliefs, table, pairs)
        diff = float(np.max(np.abs(V_new - V)))
        diffs.append(diff)
        V = V_new
        it += 1
        if diff < thr:
            converged = True
            break
    return VIResult(V, np.asarray(policy), it, converged, thr, diff, diffs)


def sup_gap(Va: np.ndarray, Vb: np.ndarray) -> float:
    Va = np.asarray(Va, dtype=float)
    Vb = np.asarray(Vb, dtype=float)
    Va = Va[:, None] if Va.ndim == 1 else Va
    Vb = Vb[:, None] if Vb.ndim == 1 else Vb
    if Va.shape[0] != Vb.shape[0] or (Va.shape[1] != Vb.shape[1] and 1 not in (Va.shape[1], Vb.shape[1])):
        raise ValueError(f"domain mismatch: {Va.shape} vs {Vb.shape}")
    return float(np.max(np.abs(Va - Vb)))


# --- inventory base-stock oracle --------------------------------------------

@dataclass(frozen=True)
class BaseStockParams:
    """Unit order cost o, shortage penalty p, holding cost h, discount, demand law."""

    o: float
    p: float
    h: float
    gamma: float
    demand: DiscreteDist

    def __post_init__(self):
        if min(self.o, self.p, self.h) < 0:
            raise ValueError("costs must be non-negative")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0,1)")


def critical_ratio(params: BaseStockParams) -> float:
    kappa = (params.p - (1.0 - params.gamma) * params.o) / (params.p + params.h)
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"critical ratio {kappa} outside (0,1); need p > (1-gamma) o")
    return kappa


def basestock_level(params: BaseStockParams) -> float:
    """Smallest demand atom whose cdf reaches the critical ratio."""
    kappa = critical_ratio(params)
    F = np.cumsum(params.demand.weights)
    return float(params.demand.values[np.argmax(F >= kappa - 1e-12)])


def stage_cost(y, z, p: float, h: float):
    """Shortage plus holding cost at post-order level y and demand z."""
    return p * np.maximum(z - y, 0.0) + h * np.maximum(y - z, 0.0)


def basestock_value(params: BaseStockParams, risk: RiskSpec, s: float) -> float:
    """Optimal value below the base-stock level under a Dirac belief."""
    s_star = basestock_level(params)
    if s > s_star:
        raise ValueError(f"closed form holds only for s <= s* = {s_star}")
    xi, w = params.demand.values, params.demand.weights
    g = params.gamma
    rho = evaluate(DiscreteDist(g * params.o * xi + stage_cost(s_star, xi, params.p, params.h), w), risk)
    return -params.o * s + params.o * s_star + rho / (1.0 - g)
