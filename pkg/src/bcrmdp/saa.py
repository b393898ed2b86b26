"""Sample-average solvers for one BCR minimization step over a finite action set."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bayes import ConjugateFamily
from .dpsolve import snap
from .hypergrid import GridLevel
from .riskcore import DiscreteDist, avar, avar_ru


@dataclass(frozen=True)
class SaaConfig:
    N: int
    M: int
    alpha: float
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ValueError("N and M must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0,1], got {self.beta}")

    @property
    def discard(self) -> int:
        """floor(alpha N), guarded against representation error."""
        return int(math.floor(self.alpha * self.N + 1e-9))


@dataclass
class StepContext:
    """One decision step: state, belief, actions and the continuation table.

    ``cost`` and ``transition`` take (s, a, xi) and broadcast over arrays of
    xi. Without ``V_next`` the continuation is zero.
    """

    family: ConjugateFamily
    hyper: tuple
    s: float
    actions: Sequence[float]
    cost: Callable
    transition: Callable
    gamma: float = 1.0
    V_next: np.ndarray | None = None
    S_next: np.ndarray | None = None
    level: GridLevel | None = None

    def continuation(self, s_next: np.ndarray, xi: np.ndarray) -> np.ndarray:
        if self.V_next is None:
            return np.zeros_like(s_next, dtype=float)
        idx, _ = snap(np.asarray(s_next, dtype=float), self.S_next)
        if self.level is None:
            nodes = np.zeros(idx.shape, dtype=int)
        else:
            hs = np.array([self.family.update(self.hyper, x) for x in np.ravel(xi)])
            nodes = self.level.rep_many(hs).reshape(idx.shape)
        return self.V_next[idx, nodes]


def draw_scenarios(ctx: StepContext, cfg: SaaConfig):
    """theta_1..theta_N from the posterior and M observations under each.

    The theta draw uses stream (0,) of the master seed and theta_i's
    observations use stream (1, i), so results do not depend on evaluation
    order.
    """
    rng0 = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    thetas = ctx.family.sample_theta(ctx.hyper, cfg.N, rng0)
    xi = np.empty((cfg.N, cfg.M))
    for i in range(cfg.N):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, i)))
        xi[i] = ctx.family.sample_obs(thetas[i], cfg.M, rng)
    return thetas, xi


def scenario_losses(ctx: StepContext, xi: np.ndarray) -> np.ndarray:
    """Stage cost plus discounted continuation: shape (n_actions, N, M)."""
    acts = np.asarray(ctx.actions, dtype=float)
    out = np.empty((acts.size,) + xi.shape)
    for k, a in enumerate(acts):
        s_next = ctx.transition(ctx.s, a, xi)
        out[k] = ctx.cost(ctx.s, a, xi) + ctx.gamma * ctx.continuation(s_next, xi)
    return out


def order_statistic_var(f: np.ndarray, alpha: float) -> np.ndarray:
    """Largest value left after discarding the floor(alpha N) largest, along the last axis."""
    f = np.asarray(f, dtype=float)
    N = f.shape[-1]
    k = int(math.floor(alpha * N + 1e-9))
    return np.sort(f, axis=-1)[..., N - k - 1]


def minlp_bruteforce(f: Sequence[float], alpha: float) -> float:
    """Optimal kappa of the big-M program by enumerating every z with sum floor(alpha N).

    For fixed z the smallest feasible kappa is max_i (f_i - U z_i).
    """
    f = np.asarray(f, dtype=float)
    N = f.size
    k = int(math.floor(alpha * N + 1e-9))
    U = float(f.max() - f.min()) + 1.0
    best = np.inf
    for chosen in itertools.combinations(range(N), k):
        z = np.zeros(N)
        z[list(chosen)] = 1.0
        best = min(best, float(np.max(f - U * z)))
    return best


def _argmin_first(values: np.ndarray) -> int:
    return int(np.flatnonzero(values == values.min())[0])


@dataclass
class SaaResult:
    action: float
    value: float
    values: np.ndarray
    thetas: np.ndarray


def var_expectation_solve(ctx: StepContext, cfg: SaaConfig) -> SaaResult:
    """Outer VaR^alpha over sampled thetas of the inner sample mean."""
    thetas, xi = draw_scenarios(ctx, cfg)
    f = scenario_losses(ctx, xi).mean(axis=2)
    kappa = order_statistic_var(f, cfg.alpha)
    i = _argmin_first(kappa)
    return SaaResult(float(ctx.actions[i]), float(kappa[i]), kappa, thetas)


def avar_avar_solve(ctx: StepContext, cfg: SaaConfig) -> SaaResult:
    """Outer AVaR^alpha over sampled thetas of the inner AVaR^beta of each M-sample."""
    thetas, xi = draw_scenarios(ctx, cfg)
    Z = scenario_losses(ctx, xi)
    n_act, N, M = Z.shape
    vals = np.empty(n_act)
    for k in range(n_act):
        inner = [avar_ru(DiscreteDist(Z[k, i]), cfg.beta) for i in range(N)]
        vals[k] = avar(DiscreteDist(inner), cfg.alpha)
    i = _argmin_first(vals)
    return SaaResult(float(ctx.actions[i]), float(vals[i]), vals, thetas)


@dataclass(frozen=True)
class SampleSizeHint:
    N0: float
    M0: str


def sample_size_hint(cfg: SaaConfig | None, L: float, D: float, n: int, iota: float,
                     eps_prob: float, eta: float) -> SampleSizeHint:
    """theta-sample size guaranteeing the VaR sandwich with probability 1 - 2 eps_prob.

    The inner sample size depends on problem constants that are not
    available in closed form, so it is returned as a formula.
    """
    for name, v in (("L", L), ("D", D), ("n", n), ("iota", iota), ("eps_prob", eps_prob), ("eta", eta)):
        if v <= 0:
            raise ValueError(f"{name} must be positive")
    N0 = (2.0 / iota ** 2) * (math.log(1.0 / eps_prob)
                              + n * math.log(math.ceil(2.0 * L * D / eta))
                              + n * math.log(math.ceil(2.0 / iota)))
    M0 = (f"8*varsigma^2/delta^2 * [log(1 + {D:g}^{n}/upsilon^{n}) + log(1/{eps_prob:g})]"
          " with varsigma, upsilon problem constants (not evaluated)")
    return SampleSizeHint(N0, M0)
