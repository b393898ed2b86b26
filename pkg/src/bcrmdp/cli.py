"""Command-line front end.

Each subcommand reads a flat YAML mapping whose keys are the fields of its
config dataclass; missing keys take the dataclass defaults and unknown keys
are rejected. ``--set key=value`` overrides are parsed as YAML scalars and
applied after the file. ``--seed`` replaces the config seed; every
replication then derives its own stream as
``SeedSequence(seed, spawn_key=(indices...))``.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 validation error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import bench
from .bayes import Belief, BetaBernoulli, make_family
from .dpsolve import ConjugateBeliefs, PointBeliefs, solve_finite
from .hypergrid import GridParams, build_grids, serialize_levels, stationary_grid
from .saa import SaaConfig, StepContext, avar_avar_solve, sample_size_hint, var_expectation_solve
from .visolve import value_iterate

log = logging.getLogger("bcrmdp")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed, unknown or out-of-range configuration."""


# --- configs owned by the CLI ---------------------------------------------------

@dataclass(frozen=True)
class SolveFiniteConfig:
    """BCR dynamic program for spread betting rooted at a Beta prior."""

    bcr: str = "AVaR:0.6|AVaR:0.8"
    prior: tuple = (1.0, 1.0)
    s1: float = 80.0
    T: int = 8
    actions: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    tau: float = 0.05
    k_theta: int = 64
    seed: int = 0

    def __post_init__(self):
        bench.parse_variant(self.bcr)
        bench.SpreadBettingConfig(s1=self.s1, T=self.T, actions=self.actions, tau=self.tau,
                                  prior=self.prior, k_theta=self.k_theta)
        if len(self.prior) != 2 or min(self.prior) <= 0:
            raise ValueError("prior must be two positive numbers")


@dataclass(frozen=True)
class SolveInfiniteConfig:
    """Inventory value iteration on a stationary grid, or at a point belief."""

    bcr: str = "VaR:0.6|E"
    prior: tuple = (1.0, 1.0)
    dirac_theta: float = 0.0
    inventory: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        bench.parse_variant(self.bcr)
        if self.dirac_theta < 0:
            raise ValueError("dirac_theta must be >= 0 (0 disables the point belief)")
        if len(self.prior) != 2 or min(self.prior) <= 0:
            raise ValueError("prior must be two positive numbers")
        build(bench.InventoryConfig, self.inventory)


@dataclass(frozen=True)
class GridConfig:
    family: str = "gamma_poisson"
    prior: tuple = (1.0, 1.0)
    stages: int = 10
    eps: float = 1.0
    m_max: int = 10
    radius: float = 20.0
    stationary: bool = False
    seed: int = 0

    def __post_init__(self):
        GridParams(self.eps, self.m_max, self.radius)
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        make_family(self.family)


@dataclass(frozen=True)
class SaaStepConfig:
    """One spread-betting decision solved by sampling."""

    method: str = "var_e"
    N: int = 200
    M: int = 200
    alpha: float = 0.6
    beta: float = 0.8
    prior: tuple = (1.0, 1.0)
    s: float = 80.0
    actions: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    tau: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("var_e", "avar_avar"):
            raise ValueError("method must be 'var_e' or 'avar_avar'")
        SaaConfig(self.N, self.M, self.alpha, self.beta, self.seed)


CONFIGS = {
    "solve-finite": SolveFiniteConfig,
    "solve-infinite": SolveInfiniteConfig,
    "grid": GridConfig,
    "bet-experiment": bench.SpreadBettingConfig,
    "inventory-experiment": bench.InventoryConfig,
    "grid-error": bench.GridErrorConfig,
    "saa-step": SaaStepConfig,
}


# --- parsing -------------------------------------------------------------------------

def _coerce(name: str, kind: str, value):
    try:
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "tuple":
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                value = [value]
            return tuple(value)
        if kind == "dict":
            if not isinstance(value, dict):
                raise TypeError
            return dict(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key {name!r}: cannot read {value!r} as {kind}") from None
    return value


def build(cls, data: dict):
    """Instantiate ``cls`` from a mapping with type coercion and range checks."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping of keys, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted(known)}")
    kwargs = {k: _coerce(k, str(known[k].type), v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


def _load_yaml(text: str, source: str):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse {source}{where}: {getattr(exc, 'problem', exc)}") from None
    return {} if data is None else data


def parse_overrides(overrides) -> dict:
    out = {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"override {item!r} has an empty key")
        value = _load_yaml(raw, f"override {key}")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(path, overrides=(), cls=bench.InventoryConfig, seed=None):
    """Validated config from a YAML file (or defaults when ``path`` is None) plus overrides."""
    data = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path!r} does not exist")
        with open(path) as fh:
            data = _load_yaml(fh.read(), path)
    data = _merge(data, parse_overrides(overrides))
    if seed is not None:
        data["seed"] = seed
    return build(cls, data)


def config_to_dict(cfg) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    return {f.name: plain(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}


def dump_config(cfg) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


# --- subcommands ---------------------------------------------------------------------

def _out(args, name: str) -> str:
    return os.path.join(args.out, name)


def cmd_solve_finite(cfg: SolveFiniteConfig, args) -> None:
    bet = bench.SpreadBettingConfig(s1=cfg.s1, T=cfg.T, actions=cfg.actions, tau=cfg.tau,
                                    prior=cfg.prior, k_theta=cfg.k_theta)
    fam = BetaBernoulli()
    levels = build_grids(Belief(fam, cfg.prior), cfg.T, GridParams(0.5, max(64, cfg.T), 1.0))
    beliefs = ConjugateBeliefs(fam, levels, k_theta=cfg.k_theta)
    sol = solve_finite(bench.betting_problem(bet, bench.parse_variant(cfg.bcr)), beliefs)
    rows = []
    for t in range(1, cfg.T):
        H = levels[t - 1].hypers
        for i, s in enumerate(sol.states[t - 1]):
            for n in range(H.shape[0]):
                rows.append((t, float(s), n, float(H[n, 0]), float(H[n, 1]),
                             float(sol.values[t - 1][i, n]), float(sol.policy[t - 1][i, n])))
    bench.write_csv(_out(args, "finite_policy.csv"), ("t", "state", "node", "m", "d", "value", "action"), rows)
    i0 = int(np.argmin(np.abs(sol.states[0] - cfg.s1)))
    print(f"V_1({cfg.s1:g}, prior) = {sol.values[0][i0, 0]:.12g}; first action {sol.policy[0][i0, 0]:g}")


def cmd_solve_infinite(cfg: SolveInfiniteConfig, args) -> None:
    inv = build(bench.InventoryConfig, cfg.inventory)
    problem = bench.inventory_problem(inv, bench.parse_variant(cfg.bcr))
    fam = make_family("gamma_poisson")
    if cfg.dirac_theta > 0:
        beliefs = PointBeliefs(fam, cfg.dirac_theta, inv.truncation)
        H = np.array([[np.nan, np.nan]])
    else:
        level = stationary_grid(Belief(fam, cfg.prior), inv.grid_depth, inv.grid_params)
        beliefs = ConjugateBeliefs(fam, level, inv.truncation, inv.k_theta, stationary=True)
        H = level.hypers
    res = value_iterate(problem, inv.vi_eps, inv.vi_max_iter, beliefs)
    S = problem.state_grid(0)
    rows = [(float(s), n, float(H[n, 0]), float(H[n, 1]), float(res.values[i, n]), float(res.policy[i, n]))
            for i, s in enumerate(S) for n in range(H.shape[0])]
    bench.write_csv(_out(args, "infinite_policy.csv"), ("state", "node", "m", "d", "value", "action"), rows)
    flag = "converged" if res.converged else "NOT converged"
    print(f"value iteration {flag} after {res.iterations} sweeps (last diff {res.last_diff:.3g}, "
          f"threshold {res.threshold:.3g})")


def cmd_grid(cfg: GridConfig, args) -> None:
    fam = make_family(cfg.family)
    params = GridParams(cfg.eps, cfg.m_max, cfg.radius)
    prior = Belief(fam, cfg.prior)
    levels = ([stationary_grid(prior, cfg.stages, params)] if cfg.stationary
              else build_grids(prior, cfg.stages, params))
    dim = levels[0].hypers.shape[1]
    header = "tau,index," + ",".join(f"h{k + 1}" for k in range(dim)) + ",weight\n"
    os.makedirs(args.out, exist_ok=True)
    with open(_out(args, "grid.csv"), "w") as fh:
        fh.write(header + serialize_levels(levels))
    print("nodes per level: " + " ".join(str(len(lv)) for lv in levels))


def cmd_bet_experiment(cfg: bench.SpreadBettingConfig, args) -> None:
    res = bench.run_spread_betting(cfg, jobs=args.jobs)
    rows = bench.betting_summary(res)
    bench.write_csv(_out(args, "betting_summary.csv"), ("model", "N", "mean", "variance", "cpu_seconds"), rows)
    hist = bench.run_betting_hist(cfg) if cfg.hist_levels else []
    bench.write_csv(_out(args, "betting_hist.csv"), ("model", "alpha", "beta", "replication", "loss"), hist)
    for r in rows:
        print(f"{r[0]:>15s} N={r[1]:<4d} mean={r[2]:9.4f} variance={r[3]:9.4f}")


def cmd_inventory_experiment(cfg: bench.InventoryConfig, args) -> None:
    res = bench.run_inventory(cfg, jobs=args.jobs)
    bench.write_csv(_out(args, "inventory_gap.csv"), ("variant", "t", "replication", "sup_gap"), res.gaps)
    bench.write_csv(_out(args, "inventory_perf.csv"), ("variant", "theta", "replication", "cost"), res.perf)
    print(f"Dirac-belief VI vs base-stock closed form: max error {res.basestock_error:.3g}")
    for v in cfg.variants:
        for t in cfg.checkpoints:
            g = [row[3] for row in res.gaps if row[0] == v and row[1] == t]
            print(f"{v:>20s} t={t:<4d} median gap {np.median(g):.4g}")


def cmd_grid_error(cfg: bench.GridErrorConfig, args) -> None:
    cells = bench.run_grid_error(cfg, jobs=args.jobs)
    bench.write_csv(_out(args, "grid_error.csv"), ("eps", "mmax", "replication", "delta", "bound"),
                    bench.grid_error_rows(cells))
    for c in cells:
        print(f"eps={c.eps:g} mmax={c.m_max:<4d} bound={c.bound:g} median={c.median:.4g} "
              f"exceed={c.exceed_rate:.3f} exceed_inside={c.exceed_inside}")


def cmd_saa_step(cfg: SaaStepConfig, args) -> None:
    fam = BetaBernoulli()
    ctx = StepContext(fam, cfg.prior, cfg.s, [a for a in cfg.actions if a <= cfg.s],
                      lambda s, a, xi: bench.betting_loss(a, xi, cfg.tau),
                      lambda s, a, xi: s - bench.betting_loss(a, xi, cfg.tau))
    saa = SaaConfig(cfg.N, cfg.M, cfg.alpha, cfg.beta, cfg.seed)
    res = (var_expectation_solve if cfg.method == "var_e" else avar_avar_solve)(ctx, saa)
    bench.write_csv(_out(args, "saa_step.csv"), ("action", "value"),
                    [(float(a), float(v)) for a, v in zip(ctx.actions, res.values)])
    hint = sample_size_hint(saa, 1.0, max(cfg.actions), 1, min(0.1, cfg.alpha / 2), 0.05, 1.0)
    print(f"chosen action {res.action:g} value {res.value:.12g}; N0 hint {hint.N0:.1f}")


COMMANDS = {
    "solve-finite": cmd_solve_finite,
    "solve-infinite": cmd_solve_infinite,
    "grid": cmd_grid,
    "bet-experiment": cmd_bet_experiment,
    "inventory-experiment": cmd_inventory_experiment,
    "grid-error": cmd_grid_error,
    "saa-step": cmd_saa_step,
}


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed {text!r} is not an integer") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit value")
    return v


def _jobs(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcrmdp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name, help=CONFIGS[name].__doc__.split("\n")[0] if CONFIGS[name].__doc__ else None)
        p.add_argument("--config", metavar="PATH", help="YAML config file")
        p.add_argument("--seed", type=_seed, metavar="U64", help="master seed (replaces the config seed)")
        p.add_argument("--out", default="results", metavar="DIR", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                       help="override a config key (repeatable)")
        p.add_argument("--jobs", type=_jobs, default=1, metavar="N", help="worker processes")
        p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    return parser


def dispatch(args) -> int:
    try:
        cfg = parse_config(args.config, args.overrides, CONFIGS[args.command], args.seed)
    except ConfigError as exc:
        print(f"bcrmdp: config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    try:
        os.makedirs(args.out, exist_ok=True)
        t0 = time.perf_counter()
        COMMANDS[args.command](cfg, args)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    except Exception as exc:  # surfaced with context, category code 1
        print(f"bcrmdp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BCRMDP_LOG", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
