import numpy as np
import pytest

from bcrmdp.bayes import BetaBernoulli
from bcrmdp.bench import (BettingEnv, ConstantPolicy, GridErrorConfig, InventoryConfig,
                          SolverCache, SpreadBettingConfig, baseline_policy, betting_loss,
                          betting_summary, evaluate_policy, expected_cost, fit_model,
                          grid_error_rows, posterior_error_path, rollout, run_grid_error,
                          run_inventory, run_spread_betting, welford, write_csv)

BCR_MODELS = ("bcr_e_e", "bcr_var_e", "bcr_avar_e", "bcr_avar_avar")


def small_cfg(**kw):
    base = dict(T=4, replications=3, n_history=(5,), k_theta=16, dr_samples=20)
    base.update(kw)
    return SpreadBettingConfig(**base)


def test_welford_examples():
    assert welford([4.0]) == (1, 4.0, 0.0)
    n, mean, var = welford([1.0, 2.0, 3.0, 4.0])
    assert (n, mean) == (4, 2.5) and var == pytest.approx(np.var([1, 2, 3, 4], ddof=1))


def test_betting_loss_examples():
    assert betting_loss(10.0, 1, 0.05) == pytest.approx(-9.5)
    assert betting_loss(10.0, 0, 0.05) == pytest.approx(10.0)
    assert betting_loss(0.0, 1, 0.05) == 0.0


def test_zero_policy_costs_nothing():
    mean, var = evaluate_policy(ConstantPolicy(0.0), 0.6, 7, 20, np.random.default_rng(0))
    assert (mean, var) == (0.0, 0.0)


def test_single_rep_has_zero_variance():
    _, var = evaluate_policy(ConstantPolicy(2.0), 0.6, 7, 1, np.random.default_rng(0))
    assert var == 0.0
    with pytest.raises(ValueError):
        evaluate_policy(ConstantPolicy(2.0), 0.6, 7, 0, np.random.default_rng(0))


def test_expected_cost_matches_closed_form():
    # constant stake a: each step loses a(1-theta) - 0.95 a theta in expectation
    a, theta, T = 2.0, 0.6, 5
    want = T * (a * (1 - theta) - 0.95 * a * theta)
    assert expected_cost(ConstantPolicy(a), BettingEnv(), theta, T) == pytest.approx(want)


def test_quadrupling_reps_halves_standard_error():
    pol = ConstantPolicy(2.0)
    se = {}
    for reps in (50, 200):
        means = [evaluate_policy(pol, 0.6, 4, reps, np.random.default_rng(k))[0] for k in range(150)]
        se[reps] = np.std(means, ddof=1)
    assert 0.4 < se[200] / se[50] < 0.6


def test_dr_with_support_endpoints_never_bets():
    res = run_spread_betting(small_cfg(), models=("dr",))
    assert len(res) == 3 and all(r.loss == 0.0 for r in res)


@pytest.mark.parametrize("perf", ["expected", "realized"])
def test_sure_market_gives_strict_gains(perf):
    res = run_spread_betting(small_cfg(theta_c=1.0, performance=perf), models=BCR_MODELS)
    assert all(r.loss < 0 for r in res)


def test_standard_bets_maximum_on_winning_history():
    cfg = small_cfg()
    pol = baseline_policy("standard", [1.0] * 5, cfg)
    assert pol.act(1, cfg.s1, None) == max(cfg.actions)
    with pytest.raises(ValueError):
        baseline_policy("standard", [], cfg)
    with pytest.raises(ValueError):
        baseline_policy("ra", [], cfg)


def _same_actions(p, q, cfg):
    for t in range(1, cfg.T):
        S = p.states[t - 1]
        if not all(p.act(t, s, None) == q.act(t, s, None) for s in S):
            return False
    return True


def test_risk_averse_with_unit_level_is_standard():
    cfg = small_cfg(beta=1.0)
    hist = [1.0, 1.0, 1.0, 0.0, 0.0]
    assert _same_actions(baseline_policy("ra", hist, cfg), baseline_policy("standard", hist, cfg), cfg)


def test_dr_with_single_sample_is_standard_at_that_value():
    cfg = small_cfg(dr_support=False)
    hist = [1.0, 1.0, 1.0, 0.0, 0.0]
    dr = baseline_policy("dr", hist, cfg, thetas=[0.6])
    assert _same_actions(dr, baseline_policy("standard", hist, cfg), cfg)


def test_episodic_bayes_with_concentrated_prior_is_standard():
    cfg = small_cfg()
    std = baseline_policy("standard", [1.0, 1.0, 1.0, 0.0, 0.0], cfg)
    epi = baseline_policy("episodic_bayes", [], cfg)
    env = BettingEnv(cfg.s1, cfg.tau)
    hyper = (0.6e9, 0.4e9)
    a = expected_cost(epi, env, 0.6, cfg.T - 1, hyper)
    b = expected_cost(std, env, 0.6, cfg.T - 1, None)
    assert a == pytest.approx(b, abs=1e-9)


def test_fit_model_returns_posterior_for_bayesian_models():
    cfg = small_cfg()
    hist = [1.0, 0.0, 1.0]
    _, h = fit_model("bcr_e_e", hist, cfg)
    assert h.tolist() == [3.0, 2.0]
    assert fit_model("standard", hist, cfg)[1] is None


def test_experiment_is_reproducible_across_runs_and_workers():
    cfg = small_cfg(models=("standard", "dr", "bcr_avar_e"), performance="realized")
    a = run_spread_betting(cfg)
    b = run_spread_betting(cfg, cache=SolverCache())
    c = run_spread_betting(cfg, jobs=2)
    key = [(r.model, r.n_history, r.replication, r.loss) for r in a]
    assert key == [(r.model, r.n_history, r.replication, r.loss) for r in b]
    assert key == [(r.model, r.n_history, r.replication, r.loss) for r in c]
    assert run_spread_betting(small_cfg(seed=1, models=("standard",), performance="realized")) != \
        run_spread_betting(small_cfg(models=("standard",), performance="realized"))


def test_summary_csv_is_byte_identical(tmp_path):
    cfg = small_cfg(models=("standard", "bcr_var_e"))
    paths = []
    for k in range(2):
        # processor time is the one column that cannot be reproduced
        rows = [r[:4] for r in betting_summary(run_spread_betting(cfg))]
        p = tmp_path / f"s{k}.csv"
        write_csv(str(p), ["model", "N", "mean", "variance"], rows)
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]


def test_rollout_uses_common_random_numbers():
    env = BettingEnv()
    xs = [rollout(ConstantPolicy(a), env, 0.6, 5, np.random.default_rng(3)) for a in (2.0, 4.0)]
    assert xs[1] == pytest.approx(2 * xs[0])


def test_config_validation():
    with pytest.raises(ValueError):
        SpreadBettingConfig(alpha=1.2)
    with pytest.raises(ValueError):
        SpreadBettingConfig(models=("nope",))
    with pytest.raises(ValueError):
        InventoryConfig(gamma=1.0)
    with pytest.raises(ValueError):
        GridErrorConfig(I=1)


def test_dirac_inventory_gaps_are_zero():
    cfg = InventoryConfig(replications=2, checkpoints=(1, 5), perf_replications=0)
    res = run_inventory(cfg, dirac=True)
    assert len(res.gaps) == 2 * 2 * len(cfg.variants)
    assert all(g[3] == 0.0 for g in res.gaps)
    assert res.basestock_error <= 2 * cfg.vi_eps


def test_grid_error_cells_respect_bound():
    cfg = GridErrorConfig(eps=(1.0,), m_max=(10,), runs=40)
    (cell,) = run_grid_error(cfg)
    assert cell.bound == 18.0
    assert cell.exceed_inside == 0
    rows = grid_error_rows([cell])
    assert len(rows) == 40 and rows[0][:2] == (1.0, 10)


def test_posterior_error_path_shrinks():
    out = posterior_error_path(10.0, (1, 10, 100), reps=30, seed=0)
    med = np.median(out, axis=0)
    assert out.shape == (30, 3) and med[2] < med[1] < med[0]


def test_sample_obs_is_bernoulli():
    xs = BetaBernoulli().sample_obs(0.6, 1000, np.random.default_rng(0))
    assert set(np.unique(xs)) <= {0.0, 1.0}
