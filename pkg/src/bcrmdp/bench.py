"""Experiment harness: spread betting, inventory control and the grid-error study.

Every replication draws its randomness from ``SeedSequence(seed, spawn_key=...)``
with a key built from its indices, so results do not depend on the order or
the process in which replications run.
"""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bayes import Belief, BetaBernoulli, GammaPoisson, Truncation
from .dpsolve import (ConjugateBeliefs, PointBeliefs, PredictiveBeliefs, ProblemSpec,
                      StaticThetaBeliefs, solve_finite)
from .hypergrid import GridParams, build_grids, error_bound, stationary_grid
from .riskcore import AVaR, BcrSpec, DiscreteDist, Expectation, VaR, parse_risk
from .visolve import (BaseStockParams, basestock_level, basestock_value, stage_cost, sup_gap,
                      value_iterate)

log = logging.getLogger(__name__)

BETTING_MODELS = ("standard", "ra", "dr", "episodic_bayes",
                  "bcr_e_e", "bcr_var_e", "bcr_avar_e", "bcr_avar_avar")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, optionally over worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def welford(values: Iterable[float]):
    """Single-pass (count, mean, sample variance); variance is 0 for one value."""
    n, mean, m2 = 0, 0.0, 0.0
    for x in values:
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    return n, mean, (m2 / (n - 1) if n > 1 else 0.0)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".12g")
        return str(v)

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# --- policies and rollouts ----------------------------------------------------

class Policy:
    def act(self, t: int, s: float, hyper) -> float:
        raise NotImplementedError


@dataclass
class ConstantPolicy(Policy):
    a: float = 0.0

    def act(self, t, s, hyper):
        return self.a


class TablePolicy(Policy):
    """Greedy table over (stage, state, node); the exact belief is projected on its grid."""

    def __init__(self, policy, states, beliefs, stationary: bool = False):
        self.policy = policy
        self.states = states
        self.beliefs = beliefs
        self.stationary = stationary

    def act(self, t, s, hyper):
        k = 0 if self.stationary else t - 1
        S = self.states if self.stationary else self.states[k]
        table = self.policy if self.stationary else self.policy[k]
        i = int(np.clip(np.searchsorted(S, s), 1, max(1, S.size - 1)))
        if S.size == 1 or abs(S[i - 1] - s) <= abs(S[i] - s):
            i -= 1
        node = 0 if hyper is None else self.beliefs.locate(t, hyper)
        return float(table[i, node])


class EpisodicPolicy(Policy):
    """Re-solves an expectation problem under the current predictive each episode."""

    def __init__(self, solve: Callable):
        self.solve = solve

    def act(self, t, s, hyper):
        sol = self.solve(tuple(np.asarray(hyper, dtype=float).tolist()))
        return sol.action(t, s)


@dataclass
class BettingEnv:
    s1: float = 80.0
    tau: float = 0.05
    gamma: float = 1.0
    family: BetaBernoulli = field(default_factory=BetaBernoulli)

    def cost(self, s, a, xi):
        return betting_loss(a, xi, self.tau)

    def next_state(self, s, a, xi):
        return s - betting_loss(a, xi, self.tau)

    def feasible(self, s, a):
        return 0.0 <= a <= s


@dataclass
class InventoryEnv:
    o: float
    p: float
    h: float
    gamma: float
    s_min: float
    y_max: float
    s1: float = 0.0
    family: GammaPoisson = field(default_factory=GammaPoisson)

    def cost(self, s, a, xi):
        return self.o * a + stage_cost(s + a, xi, self.p, self.h)

    def next_state(self, s, a, xi):
        return float(np.clip(s + a - xi, self.s_min, self.y_max))

    def feasible(self, s, a):
        return a >= 0.0


def rollout(policy: Policy, env, theta: float, horizon: int, rng: np.random.Generator,
            hyper=None) -> float:
    """Discounted realized cost of ``horizon`` decisions against P_theta."""
    s, total, disc = env.s1, 0.0, 1.0
    h = None if hyper is None else np.asarray(hyper, dtype=float)
    for t in range(1, horizon + 1):
        a = policy.act(t, s, h)
        if not env.feasible(s, a):
            raise ValueError(f"infeasible action {a} at state {s}")
        xi = float(env.family.sample_obs(theta, 1, rng)[0])
        total += disc * env.cost(s, a, xi)
        disc *= env.gamma
        s = env.next_state(s, a, xi)
        if h is not None:
            h = env.family.update(h, xi)
    return total


def expected_cost(policy: Policy, env, theta: float, horizon: int, hyper=None,
                  max_paths: int = 1_000_000) -> float:
    """Exact expected discounted cost by enumerating every observation path.

    Needs a finite observation support, as for Bernoulli market moves.
    """
    xi = env.family.obs_support([theta], Truncation())
    p = env.family.likelihood([theta], xi)[0]
    keep = p > 0
    xi, p = xi[keep], p[keep]
    if xi.size ** horizon > max_paths:
        raise ValueError("observation tree too large for exact enumeration")

    def go(t, s, h, disc):
        if t > horizon:
            return 0.0
        a = policy.act(t, s, h)
        if not env.feasible(s, a):
            raise ValueError(f"infeasible action {a} at state {s}")
        total = 0.0
        for x, px in zip(xi, p):
            nh = None if h is None else env.family.update(h, x)
            total += px * (disc * env.cost(s, a, x) + go(t + 1, env.next_state(s, a, x), nh, disc * env.gamma))
        return total

    return float(go(1, env.s1, None if hyper is None else np.asarray(hyper, dtype=float), 1.0))


def evaluate_policy(policy: Policy, true_theta: float, horizon: int, reps: int,
                    rng: np.random.Generator, env=None, hyper=None):
    """(mean, sample variance) of realized cost over seeded rollouts."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    env = env or BettingEnv()
    _, mean, var = welford(rollout(policy, env, true_theta, horizon, rng, hyper) for _ in range(reps))
    return mean, var


# --- spread betting -------------------------------------------------------------

def betting_loss(a, xi, tau):
    """Negative net profit of stake a; xi in {0,1} encodes the market move -1/+1."""
    up = np.asarray(xi) == 1
    return -(1.0 - tau * up) * a * np.where(up, 1.0, -1.0)


@dataclass(frozen=True)
class SpreadBettingConfig:
    s1: float = 80.0
    theta_c: float = 0.6
    T: int = 8
    actions: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    alpha: float = 0.6
    beta: float = 0.8
    tau: float = 0.05
    n_history: tuple = (5, 10, 50, 150)
    replications: int = 100
    models: tuple = BETTING_MODELS
    prior: tuple = (1.0, 1.0)
    k_theta: int = 64
    m_max: int = 64
    dr_samples: int = 100
    dr_support: bool = True
    wealth_step: float = 0.1
    hist_levels: tuple = (0.01, 0.5, 0.9)
    hist_n: int = 50
    performance: str = "expected"
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if not 0 < self.theta_c < 1 and self.theta_c not in (0.0, 1.0):
            raise ValueError("theta_c must lie in [0,1]")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0,1], got {v}")
        if not 0 <= self.tau < 1:
            raise ValueError("tau must lie in [0,1)")
        if min(self.actions) < 0:
            raise ValueError("stakes must be non-negative")
        if self.replications < 1 or min(self.n_history) < 1:
            raise ValueError("replications and history sizes must be >= 1")
        if self.performance not in ("expected", "realized"):
            raise ValueError("performance must be 'expected' or 'realized'")
        bad = set(self.models) - set(BETTING_MODELS)
        if bad:
            raise ValueError(f"unknown models {sorted(bad)}")


def betting_problem(cfg: SpreadBettingConfig, bcr: BcrSpec) -> ProblemSpec:
    acts = np.sort(np.asarray(cfg.actions, dtype=float))
    up, down = (1.0 - cfg.tau) * acts.max(), acts.max()
    step = cfg.wealth_step

    def states(t):
        lo = cfg.s1 - down * (t - 1)
        n = int(round((up + down) * (t - 1) / step)) + 1
        return np.round(lo + step * np.arange(n), 10)

    return ProblemSpec(
        states=states,
        actions=lambda s: acts[acts <= s],
        cost=lambda t, s, a, xi: betting_loss(a, xi, cfg.tau),
        transition=lambda t, s, a, xi: s - betting_loss(a, xi, cfg.tau),
        terminal_cost=lambda S: np.zeros_like(S),
        horizon=cfg.T,
        bcr=bcr,
        gamma=1.0,
        family=BetaBernoulli(),
    )


def betting_bcr(model: str, cfg: SpreadBettingConfig, alpha=None, beta=None) -> BcrSpec:
    a = cfg.alpha if alpha is None else alpha
    b = cfg.beta if beta is None else beta
    return {
        "standard": BcrSpec(Expectation(), Expectation()),
        "ra": BcrSpec(Expectation(), AVaR(b)),
        "dr": BcrSpec(VaR(0.0), Expectation()),
        "episodic_bayes": BcrSpec(Expectation(), Expectation()),
        "bcr_e_e": BcrSpec(Expectation(), Expectation()),
        "bcr_var_e": BcrSpec(VaR(a), Expectation()),
        "bcr_avar_e": BcrSpec(AVaR(a), Expectation()),
        "bcr_avar_avar": BcrSpec(AVaR(a), AVaR(b)),
    }[model]


class SolverCache:
    """Memoized DP solutions keyed by model, levels and belief hyper-parameters."""

    def __init__(self):
        self._store: dict = {}
        self.tables: dict = {}

    def get(self, key, build: Callable):
        if key not in self._store:
            self._store[key] = build()
        return self._store[key]


def _tables(cache: SolverCache, cfg: SpreadBettingConfig) -> dict:
    # stage tables depend only on the market mechanics, not on beliefs or risk levels
    return cache.tables.setdefault((cfg.s1, cfg.T, cfg.actions, cfg.tau, cfg.wealth_step), {})


def bcr_policy(cfg: SpreadBettingConfig, hyper, bcr: BcrSpec, cache: SolverCache | None = None) -> Policy:
    """BCR dynamic program on the exact Beta belief tree rooted at ``hyper``."""
    cache = cache or SolverCache()
    hyper = tuple(float(x) for x in hyper)
    fam = BetaBernoulli()

    def build():
        # the binary net reproduces every Bayes update; m_max >= T keeps all nodes
        params = GridParams(eps=0.5, m_max=max(cfg.m_max, cfg.T), radius=1.0)
        levels = build_grids(Belief(fam, hyper), cfg.T, params)
        beliefs = ConjugateBeliefs(fam, levels, k_theta=cfg.k_theta)
        sol = solve_finite(betting_problem(cfg, bcr), beliefs, _tables(cache, cfg))
        return TablePolicy(sol.policy, sol.states, beliefs)

    return cache.get(("bcr", bcr.label(), hyper, cfg.k_theta, cfg.T), build)


def baseline_policy(kind: str, history: Sequence[float], cfg: SpreadBettingConfig,
                    rng: np.random.Generator | None = None, cache: SolverCache | None = None,
                    thetas=None) -> Policy:
    """Standard, RA, DR and episodic-Bayes baselines fitted to ``history``."""
    cache = cache or SolverCache()
    fam = BetaBernoulli()
    if kind in ("standard", "ra"):
        if len(history) == 0:
            raise ValueError(f"{kind} baseline needs a non-empty history")
        theta_hat = fam.mle(history)
        bcr = betting_bcr(kind, cfg)

        def build():
            beliefs = PointBeliefs(fam, theta_hat)
            sol = solve_finite(betting_problem(cfg, bcr), beliefs, _tables(cache, cfg))
            return TablePolicy(sol.policy, sol.states, beliefs)

        return cache.get((kind, bcr.label(), theta_hat, cfg.T), build)
    post = Belief(fam, cfg.prior).update_all(history)
    if kind == "dr":
        if thetas is None:
            rng = rng or np.random.default_rng(cfg.seed)
            thetas = fam.sample_theta(post.h, cfg.dr_samples, rng)
            if cfg.dr_support:
                thetas = np.concatenate([thetas, [0.0, 1.0]])
        thetas = np.unique(np.asarray(thetas, dtype=float))
        beliefs = StaticThetaBeliefs(fam, thetas)
        sol = solve_finite(betting_problem(cfg, betting_bcr("dr", cfg)), beliefs, _tables(cache, cfg))
        return TablePolicy(sol.policy, sol.states, beliefs)
    if kind == "episodic_bayes":
        def solve(h):
            def build():
                beliefs = PredictiveBeliefs(fam, h)
                return solve_finite(betting_problem(cfg, betting_bcr("standard", cfg)), beliefs, _tables(cache, cfg))
            return cache.get(("episodic", h, cfg.T), build)

        return EpisodicPolicy(solve)
    raise ValueError(f"unknown baseline {kind!r}")


def fit_model(model: str, history, cfg: SpreadBettingConfig, rng=None, cache=None,
              alpha=None, beta=None):
    """(policy, initial hyper for online updates or None)."""
    if model in ("standard", "ra", "dr"):
        return baseline_policy(model, history, cfg, rng, cache), None
    post = Belief(BetaBernoulli(), cfg.prior).update_all(history)
    if model == "episodic_bayes":
        return baseline_policy(model, history, cfg, rng, cache), post.h
    return bcr_policy(cfg, post.h, betting_bcr(model, cfg, alpha, beta), cache), post.h


@dataclass(frozen=True)
class ReplicationResult:
    model: str
    n_history: int
    replication: int
    loss: float
    cpu_seconds: float
    seed: int
    batch: int = 0


def _betting_replication(cfg: SpreadBettingConfig, batch: int, n: int, r: int, models,
                         cache: SolverCache, alpha=None, beta=None) -> list[ReplicationResult]:
    fam = BetaBernoulli()
    history = fam.sample_obs(cfg.theta_c, n, _rng(cfg.seed, batch, n, r, 0))
    env = BettingEnv(cfg.s1, cfg.tau)
    out = []
    for model in models:
        t0 = time.process_time()
        policy, hyper = fit_model(model, history, cfg, _rng(cfg.seed, batch, n, r, 2), cache, alpha, beta)
        cpu = time.process_time() - t0
        if cfg.performance == "expected":
            loss = expected_cost(policy, env, cfg.theta_c, cfg.T - 1, hyper)
        else:
            # common market moves across models
            loss = rollout(policy, env, cfg.theta_c, cfg.T - 1, _rng(cfg.seed, batch, n, r, 1), hyper)
        out.append(ReplicationResult(model, n, r, float(loss), cpu, cfg.seed, batch))
    return out


def run_spread_betting(cfg: SpreadBettingConfig, batch: int = 0, n_history=None, models=None,
                       cache: SolverCache | None = None, jobs: int = 1) -> list[ReplicationResult]:
    models = tuple(models or cfg.models)
    ns = tuple(n_history or cfg.n_history)
    tasks = [(cfg, batch, n, r, models) for n in ns for r in range(cfg.replications)]
    if jobs > 1:
        chunks = _map(_betting_task, tasks, jobs)
    else:
        cache = cache or SolverCache()
        chunks = [_betting_replication(*t, cache) for t in tasks]
    return [x for c in chunks for x in c]


def _betting_task(args):
    return _betting_replication(*args, SolverCache())


def betting_summary(results: Sequence[ReplicationResult]):
    """Rows (model, N, mean, variance, cpu_seconds) in first-seen model order."""
    groups: dict = {}
    for r in results:
        groups.setdefault((r.model, r.n_history), []).append(r)
    rows = []
    for (model, n), rs in groups.items():
        _, mean, var = welford(x.loss for x in rs)
        rows.append((model, n, mean, var, float(np.mean([x.cpu_seconds for x in rs]))))
    return rows


def run_betting_hist(cfg: SpreadBettingConfig, jobs: int = 1):
    """Realized losses of the AVaR-AVaR model over a grid of (alpha, beta) levels."""
    cache = SolverCache()
    rows = []
    for a in cfg.hist_levels:
        for b in cfg.hist_levels:
            for r in range(cfg.replications):
                res = _betting_replication(cfg, 0, cfg.hist_n, r, ("bcr_avar_avar",), cache, a, b)[0]
                rows.append(("bcr_avar_avar", a, b, r, res.loss))
    return rows


# --- inventory control ------------------------------------------------------------

@dataclass(frozen=True)
class InventoryConfig:
    o: float = 2.0
    h: float = 4.0
    p: float = 6.0
    gamma: float = 0.8
    alpha: float = 0.6
    beta: float = 0.4
    theta_c: tuple = (10.0,)
    prior: tuple = (1.0, 1.0)
    grid_depth: int = 4
    grid_radius: float = 20.0
    grid_eps: float = 2.0
    grid_m_max: int = 10
    demand_radius: int = 40
    y_max: float = 40.0
    k_theta: int = 32
    vi_eps: float = 0.1
    vi_max_iter: int = 2000
    checkpoints: tuple = (1, 10, 50, 100)
    variants: tuple = ("VaR:0.6|E", "AVaR:0.6|AVaR:0.4")
    replications: int = 20
    perf_replications: int = 5
    perf_horizon: int = 20
    seed: int = 0

    def __post_init__(self):
        if min(self.o, self.h, self.p) < 0:
            raise ValueError("costs must be non-negative")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0,1)")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0,1], got {v}")
        kappa = (self.p - (1 - self.gamma) * self.o) / (self.p + self.h)
        if not 0 < kappa < 1:
            raise ValueError(f"critical ratio {kappa} outside (0,1)")
        if min(self.theta_c) <= 0:
            raise ValueError("theta_c must be positive")
        if self.replications < 1 or min(self.checkpoints) < 1:
            raise ValueError("replications and checkpoints must be >= 1")
        if self.y_max <= 0 or self.demand_radius < 1:
            raise ValueError("y_max and demand_radius must be positive")

    @property
    def grid_params(self) -> GridParams:
        return GridParams(self.grid_eps, self.grid_m_max, self.grid_radius)

    @property
    def truncation(self) -> Truncation:
        return Truncation(radius=self.demand_radius)


def parse_variant(text: str) -> BcrSpec:
    outer, inner = text.split("|")
    return BcrSpec(parse_risk(outer), parse_risk(inner))


def inventory_problem(cfg: InventoryConfig, bcr: BcrSpec) -> ProblemSpec:
    """Order-up-to formulation: y = s + a in [max(s,0), y_max], backlog below zero."""
    S = np.arange(-cfg.demand_radius, cfg.y_max + 1, dtype=float)
    o, p, h = cfg.o, cfg.p, cfg.h

    def actions(s):
        return np.arange(max(0.0, -s), cfg.y_max - s + 1)

    return ProblemSpec(
        states=S,
        actions=actions,
        cost=lambda t, s, a, xi: o * a + stage_cost(s + a, xi, p, h),
        transition=lambda t, s, a, xi: s + a - xi,
        terminal_cost=lambda S_: np.zeros_like(S_),
        horizon=None,
        bcr=bcr,
        gamma=cfg.gamma,
        family=GammaPoisson(),
        truncation=cfg.truncation,
        # cost = o a + c(y, xi) and s' = y - xi depend on (s, a) through y only
        post_decision=lambda s, a: (s + a, o * a),
    )


def dirac_values(cfg: InventoryConfig, bcr: BcrSpec, theta: float):
    beliefs = PointBeliefs(GammaPoisson(), theta, cfg.truncation)
    return value_iterate(inventory_problem(cfg, bcr), cfg.vi_eps, cfg.vi_max_iter, beliefs)


def check_basestock(cfg: InventoryConfig, theta: float, res=None) -> float:
    """Largest deviation of Dirac-belief VI from the closed form over s <= s*."""
    bcr = BcrSpec(Expectation(), Expectation())
    res = res or dirac_values(cfg, bcr, theta)
    fam = GammaPoisson()
    xi = fam.obs_support([theta], cfg.truncation)
    w = fam.likelihood([theta], xi)[0]
    params = BaseStockParams(cfg.o, cfg.p, cfg.h, cfg.gamma, DiscreteDist.from_unnormalized(xi, w))
    S = inventory_problem(cfg, bcr).state_grid(0)
    s_star = basestock_level(params)
    mask = S <= s_star
    ref = np.array([basestock_value(params, Expectation(), s) for s in S[mask]])
    return float(np.max(np.abs(res.values[mask, 0] - ref)))


class BeliefGridCache:
    """Stationary grids and their belief models keyed by root hyper-parameters."""

    def __init__(self, cfg: InventoryConfig):
        self.cfg = cfg
        self._store: dict = {}

    def get(self, hyper):
        key = tuple(float(x) for x in hyper)
        if key not in self._store:
            cfg = self.cfg
            fam = GammaPoisson()
            level = stationary_grid(Belief(fam, key), cfg.grid_depth, cfg.grid_params)
            self._store[key] = ConjugateBeliefs(fam, level, cfg.truncation, cfg.k_theta, stationary=True)
        return self._store[key]


def _assert_cap_slack(cfg: InventoryConfig, problem: ProblemSpec, policy: np.ndarray) -> None:
    S = problem.state_grid(0)
    y = S[:, None] + policy
    binding = (y >= cfg.y_max) & (S[:, None] < cfg.y_max)
    if np.any(binding):
        raise RuntimeError("order-up-to cap y_max binds at the optimum; raise y_max")


@dataclass
class InventoryResult:
    gaps: list
    perf: list
    basestock_error: float


def _inventory_replication(args):
    cfg, r, theta_c, refs = args
    fam = GammaPoisson()
    demand = fam.sample_obs(theta_c, max(cfg.checkpoints), _rng(cfg.seed, r))
    grids = BeliefGridCache(cfg)
    rows = []
    for t in cfg.checkpoints:
        hyper = np.asarray(cfg.prior, dtype=float) + np.array([demand[:t].sum(), t])
        beliefs = grids.get(hyper)
        node = beliefs.locate(0, hyper)
        for variant in cfg.variants:
            problem = inventory_problem(cfg, parse_variant(variant))
            res = value_iterate(problem, cfg.vi_eps, cfg.vi_max_iter, beliefs)
            _assert_cap_slack(cfg, problem, res.policy)
            rows.append((variant, t, r, sup_gap(res.values[:, node], refs[variant])))
    return rows


def run_inventory(cfg: InventoryConfig, jobs: int = 1, dirac: bool = False) -> InventoryResult:
    """Sup-norm gap between posterior-belief and true-parameter optimal values.

    With ``dirac=True`` the belief is a point mass at the true parameter from
    the start, so every gap is zero.
    """
    theta_c = float(cfg.theta_c[0])
    refs, ref_res = {}, {}
    for variant in cfg.variants:
        ref_res[variant] = dirac_values(cfg, parse_variant(variant), theta_c)
        refs[variant] = ref_res[variant].values[:, 0]
    err = check_basestock(cfg, theta_c)
    if dirac:
        gaps = [(v, t, r, sup_gap(ref_res[v].values, refs[v]))
                for r in range(cfg.replications) for t in cfg.checkpoints for v in cfg.variants]
    else:
        chunks = _map(_inventory_replication,
                      [(cfg, r, theta_c, refs) for r in range(cfg.replications)], jobs)
        gaps = [row for c in chunks for row in c]
        order = {v: i for i, v in enumerate(cfg.variants)}
        gaps.sort(key=lambda g: (order[g[0]], g[1], g[2]))
    perf = inventory_performance(cfg) if cfg.perf_replications > 0 else []
    return InventoryResult(gaps, perf, err)


def inventory_performance(cfg: InventoryConfig):
    """Discounted realized cost of prior-rooted BCR policies across true demand rates."""
    grids = BeliefGridCache(cfg)
    prior = np.asarray(cfg.prior, dtype=float)
    beliefs = grids.get(prior)
    env = InventoryEnv(cfg.o, cfg.p, cfg.h, cfg.gamma, -float(cfg.demand_radius), cfg.y_max)
    rows = []
    for variant in cfg.variants:
        problem = inventory_problem(cfg, parse_variant(variant))
        res = value_iterate(problem, cfg.vi_eps, cfg.vi_max_iter, beliefs)
        policy = TablePolicy(res.policy, problem.state_grid(0), beliefs, True)
        for k, theta in enumerate(cfg.theta_c):
            for r in range(cfg.perf_replications):
                cost = rollout(policy, env, float(theta), cfg.perf_horizon, _rng(cfg.seed, 1, k, r), prior)
                rows.append((variant, float(theta), r, cost))
    return rows


# --- grid error study --------------------------------------------------------------

@dataclass(frozen=True)
class GridErrorConfig:
    I: int = 10
    R: float = 20.0
    theta_c: float = 10.0
    eps: tuple = (1.0, 1.5, 2.0)
    m_max: tuple = (10, 20, 100)
    runs: int = 500
    prior: tuple = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.I < 2 or self.runs < 1:
            raise ValueError("I must be >= 2 and runs >= 1")
        if self.R <= 0 or min(self.eps) <= 0 or min(self.m_max) < 1:
            raise ValueError("R, eps and m_max must be positive")


@dataclass
class GridErrorCell:
    eps: float
    m_max: int
    bound: float
    deltas: np.ndarray
    inside: np.ndarray

    @property
    def exceed_rate(self) -> float:
        return float(np.mean(self.deltas > self.bound + 1e-9))

    @property
    def exceed_inside(self) -> int:
        return int(np.sum((self.deltas > self.bound + 1e-9) & self.inside))

    @property
    def median(self) -> float:
        return float(np.median(self.deltas))


def run_grid_error(cfg: GridErrorConfig, jobs: int = 1) -> list[GridErrorCell]:
    """Projection error of the exact stage-I hyper onto the built grid, per (eps, m_max)."""
    fam = GammaPoisson()
    prior = Belief(fam, cfg.prior)
    # paired paths: run k uses the same demands in every cell
    paths = np.array([fam.sample_obs(cfg.theta_c, cfg.I - 1, _rng(cfg.seed, k)) for k in range(cfg.runs)])
    exact = prior.h[None, :] + np.column_stack([paths.sum(axis=1), np.full(cfg.runs, cfg.I - 1.0)])
    inside = np.all(np.abs(paths) <= cfg.R, axis=1)
    cells = _map(_grid_cell, [(cfg, e, m, exact, inside) for e in cfg.eps for m in cfg.m_max], jobs)
    return cells


def _grid_cell(args):
    cfg, eps, m, exact, inside = args
    fam = GammaPoisson()
    levels = build_grids(Belief(fam, cfg.prior), cfg.I, GridParams(eps, m, cfg.R))
    last = levels[cfg.I - 1]
    deltas = np.array([last.projection_error(h) for h in exact])
    return GridErrorCell(eps, m, error_bound(cfg.I, eps, fam.lipschitz_stat()), deltas, inside)


def grid_error_rows(cells: Sequence[GridErrorCell]):
    return [(c.eps, c.m_max, k, float(d), c.bound) for c in cells for k, d in enumerate(c.deltas)]


# --- posterior consistency ---------------------------------------------------------

def posterior_error_path(theta_c: float, checkpoints: Sequence[int], reps: int, seed: int = 0,
                         prior=(1.0, 1.0)) -> np.ndarray:
    """v_t + (m_t - theta_c)^2 of the Gamma posterior along Poisson streams: (reps, checkpoints)."""
    fam = GammaPoisson()
    T = max(checkpoints)
    out = np.empty((reps, len(checkpoints)))
    for r in range(reps):
        xi = fam.sample_obs(theta_c, T, _rng(seed, r))
        for k, t in enumerate(checkpoints):
            b = Belief(fam, prior).update_all(xi[:t])
            m, v = fam.moments(b.h)
            out[r, k] = v + (m - theta_c) ** 2
    return out
