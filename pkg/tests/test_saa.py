import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcrmdp.bayes import BetaBernoulli, GammaPoisson
from bcrmdp.riskcore import DiscreteDist, avar
from bcrmdp.saa import (SaaConfig, StepContext, avar_avar_solve, draw_scenarios, minlp_bruteforce,
                        order_statistic_var, sample_size_hint, scenario_losses,
                        var_expectation_solve)


def poisson_step():
    return StepContext(GammaPoisson(), (20.0, 2.0), 0.0, [8.0, 10.0, 12.0],
                       cost=lambda s, a, xi: 0.1 * (a - xi) ** 2, transition=lambda s, a, xi: 0 * xi)


def betting_step():
    return StepContext(BetaBernoulli(), (3.0, 2.0), 10.0, [0.0, 2.0, 4.0],
                       cost=lambda s, a, xi: -a * (2 * xi - 1), transition=lambda s, a, xi: s + a * (2 * xi - 1))


def refine_min(fn, lo, hi, tol=1e-7):
    # zoom a uniform grid onto the minimizer of a convex piecewise-linear function
    while hi - lo > tol:
        xs = np.linspace(lo, hi, 41)
        k = int(np.argmin([fn(x) for x in xs]))
        lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, 40)]
    return fn(0.5 * (lo + hi))


def test_config_validation():
    with pytest.raises(ValueError):
        SaaConfig(0, 5, 0.5)
    with pytest.raises(ValueError):
        SaaConfig(5, 5, 1.0)
    with pytest.raises(ValueError):
        SaaConfig(5, 5, 0.5, beta=0.0)
    assert SaaConfig(5, 5, 0.4).discard == 2


def test_order_statistic_examples():
    f = [10.0, 20.0, 30.0, 40.0, 50.0]
    assert order_statistic_var(f, 0.4) == 30.0
    assert order_statistic_var(f, 0.1) == 50.0
    assert minlp_bruteforce(f, 0.4) == 30.0


def test_outer_avar_example():
    assert avar(DiscreteDist([10, 20, 30, 40, 50]), 0.4) == pytest.approx(45.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=8),
       st.sampled_from([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]))
def test_order_statistic_equals_big_m_program(f, alpha):
    assert order_statistic_var(f, alpha) == minlp_bruteforce(f, alpha)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30))
def test_order_statistic_non_increasing_in_alpha(f):
    vals = [order_statistic_var(f, a) for a in np.linspace(0.01, 0.99, 25)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))


def test_solvers_are_seed_deterministic():
    ctx = poisson_step()
    cfg = SaaConfig(50, 30, 0.4, beta=0.5, seed=9)
    a = var_expectation_solve(ctx, cfg)
    b = var_expectation_solve(ctx, cfg)
    assert (a.action, a.value) == (b.action, b.value)
    a = avar_avar_solve(ctx, cfg)
    b = avar_avar_solve(ctx, cfg)
    assert (a.action, a.value) == (b.action, b.value)
    assert var_expectation_solve(ctx, SaaConfig(50, 30, 0.4, seed=10)).value != a.value


def test_var_expectation_uses_sample_means():
    ctx = poisson_step()
    cfg = SaaConfig(40, 25, 0.3, seed=2)
    _, xi = draw_scenarios(ctx, cfg)
    f = scenario_losses(ctx, xi).mean(axis=2)
    res = var_expectation_solve(ctx, cfg)
    ks = [order_statistic_var(row, 0.3) for row in f]
    assert res.value == min(ks) and res.action == ctx.actions[int(np.argmin(ks))]


def test_unit_inner_level_reduces_to_sample_mean():
    ctx = betting_step()
    cfg = SaaConfig(30, 20, 0.4, beta=1.0, seed=5)
    _, xi = draw_scenarios(ctx, cfg)
    f = scenario_losses(ctx, xi).mean(axis=2)
    outer = [avar(DiscreteDist(row), 0.4) for row in f]
    res = avar_avar_solve(ctx, cfg)
    assert res.values == pytest.approx(outer, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_nested_value_equals_joint_program(seed):
    ctx = poisson_step()
    N, M = 5, 6
    cfg = SaaConfig(N, M, 0.4, beta=0.5, seed=seed)
    _, xi = draw_scenarios(ctx, cfg)
    Z = scenario_losses(ctx, xi)
    res = avar_avar_solve(ctx, cfg)
    for k in range(len(ctx.actions)):
        lo, hi = Z[k].min() - 1.0, Z[k].max() + 1.0

        def inner(i):
            return refine_min(lambda w: w + np.mean(np.maximum(Z[k, i] - w, 0)) / cfg.beta, lo, hi)

        c = np.array([inner(i) for i in range(N)])
        joint = refine_min(lambda u: u + np.mean(np.maximum(c - u, 0)) / cfg.alpha, lo, hi)
        assert res.values[k] == pytest.approx(joint, abs=1e-6)


def test_sample_size_hint_examples():
    h = sample_size_hint(None, L=1.0, D=10.0, n=1, iota=0.1, eps_prob=0.05, eta=1.0)
    assert h.N0 == pytest.approx(200 * 3 * math.log(20), rel=1e-12)
    assert round(h.N0) == 1797
    h2 = sample_size_hint(None, L=1.0, D=10.0, n=1, iota=0.1, eps_prob=0.025, eta=1.0)
    assert h2.N0 - h.N0 == pytest.approx(200 * math.log(2))
    assert isinstance(h.M0, str) and "varsigma" in h.M0
    with pytest.raises(ValueError):
        sample_size_hint(None, L=1.0, D=10.0, n=1, iota=0.0, eps_prob=0.05, eta=1.0)


@pytest.mark.slow
def test_sample_var_tightens_around_quadrature_value():
    ctx = poisson_step()
    alpha = 0.4
    th, _ = GammaPoisson().theta_quadrature((20.0, 2.0), 4000)
    k = int(np.ceil((1 - alpha) * th.size)) - 1
    exact = min(np.sort(0.1 * ((a - th) ** 2 + th))[k] for a in ctx.actions)
    stats = {}
    for N in (100, 400):
        ks = np.array([var_expectation_solve(ctx, SaaConfig(N, N, alpha, seed=r)).value for r in range(200)])
        q1, med, q3 = np.percentile(ks, [25, 50, 75])
        stats[N] = (q3 - q1, abs(med - exact))
    # quadrupling the sample sizes halves the spread at the 1/sqrt(N) rate
    assert stats[400][0] < 0.6 * stats[100][0]
    assert stats[400][1] <= stats[100][1] + 0.01
