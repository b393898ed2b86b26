import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcrmdp.bayes import Belief, BetaBernoulli, GammaPoisson, NormalKnownVar
from bcrmdp.hypergrid import (GridLevel, GridParams, build_grids, cluster, eps_net, error_bound,
                              expand, parse_levels, project_guarantee, projection_error,
                              serialize_levels, stationary_grid)


def covers(points, net, eps):
    return all(np.min(np.abs(net - p)) <= eps + 1e-12 for p in points)


def test_eps_net_examples():
    assert eps_net(5, 1, "count").tolist() == [0, 1, 2, 3, 4, 5]
    assert eps_net(5, 2, "count").tolist() == [0, 2, 4, 5]
    net = eps_net(1, 0.5, "real")
    assert net.tolist() == [-1.0, 0.0, 1.0]
    assert covers(np.linspace(-1, 1, 401), net, 0.5)
    with pytest.raises(ValueError):
        eps_net(5, 0.5, "count")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 30), st.floats(0.05, 5))
def test_real_net_covers_ball(R, eps):
    net = eps_net(R, eps, "real")
    assert np.all(np.diff(net) <= 2 * eps + 1e-12)
    assert covers(np.linspace(-R, R, 301), net, eps)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.floats(1, 6))
def test_count_net_covers_lattice(R, eps):
    assert covers(np.arange(R + 1.0), eps_net(R, eps, "count"), eps)


def test_expand_examples():
    root = GridLevel(1, [[1.0, 1.0]], [1.0])
    H, w = expand(root, BetaBernoulli(), [0, 1])
    assert H.tolist() == [[1.0, 2.0], [2.0, 1.0]]
    assert w.tolist() == pytest.approx([0.5, 0.5])
    H, w = expand(root, GammaPoisson(), [0, 1])
    assert H.tolist() == [[1.0, 2.0], [2.0, 2.0]]
    assert w.tolist() == pytest.approx([0.5, 0.25])
    two = GridLevel(2, [[1.0, 2.0], [2.0, 1.0]], [0.5, 0.5])
    H, _ = expand(two, BetaBernoulli(), [0, 1])
    assert len(H) == 4 and sum(h.tolist() == [2.0, 2.0] for h in H) == 2


def test_cluster_examples():
    H, w = cluster([[0, 0], [2, 0]], [1, 1], 1)
    assert H.tolist() == [[1.0, 0.0]] and w.tolist() == [2.0]
    H, w = cluster([[0, 0], [2, 0]], [3, 1], 1)
    assert H.tolist() == [[0.5, 0.0]] and w.tolist() == [4.0]
    H, w = cluster([[2, 0], [0, 0]], [1, 1], 5)
    assert H.tolist() == [[0.0, 0.0], [2.0, 0.0]]


def test_cluster_tie_break_is_lexicographic():
    # three equally spaced points: both adjacent pairs tie, the lexicographically smaller merges
    H, w = cluster([[2, 0], [0, 0], [1, 0]], [1, 1, 1], 2)
    assert H.tolist() == [[0.5, 0.0], [2.0, 0.0]]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20), st.floats(0.01, 3)), min_size=1, max_size=30),
       st.integers(1, 10))
def test_cluster_conserves_mass(pts, m_max):
    H = [[a, b] for a, b, _ in pts]
    w = [c for _, _, c in pts]
    Hc, wc = cluster(H, w, m_max)
    assert len(wc) <= m_max
    assert wc.sum() == pytest.approx(sum(w), rel=1e-12)
    # merged centroid stays inside the bounding box
    assert np.all(Hc.min(axis=0) >= np.min(H, axis=0) - 1e-9)


def test_project_guarantee_examples():
    H, w = project_guarantee([[5, 5]], [0.1], [[0, 0], [10, 10]], [0.5, 0.4], eps=5 * np.sqrt(2) / 3)
    assert [5.0, 5.0] in H.tolist()
    H, w = project_guarantee([[0.2, 0]], [1.0], [[0, 0]], [1.0], eps=0.5)
    assert H.tolist() == [[0.0, 0.0]] and w.tolist() == [1.0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20), st.floats(0.01, 3)), min_size=2, max_size=25),
       st.integers(1, 6), st.floats(0.3, 4))
def test_projection_guarantee_always_covers(pts, m_max, eps):
    E = np.array([[a, b] for a, b, _ in pts])
    Ew = np.array([c for _, _, c in pts])
    H, w = cluster(E, Ew, m_max)
    H, w = project_guarantee(E, Ew, H, w, eps, m_max)
    d = np.sqrt(((E[:, None, :] - H[None]) ** 2).sum(axis=2)).min(axis=1)
    assert d.max() <= eps * (1 + 1e-9)


def test_rep_examples():
    lv = GridLevel(1, [[1.0, 0.0], [2.0, 0.0]], [0.5, 0.5])
    assert lv.rep([2.0, 0.0]) == 1
    assert lv.rep([1.2, 0.0]) == 0
    assert lv.rep([1.5, 0.0]) == 0


def test_build_grids_examples():
    prior = Belief(BetaBernoulli(), (1, 1))
    params = GridParams(eps=0.5, m_max=100, radius=1)
    levels = build_grids(prior, 1, params)
    assert len(levels) == 1 and levels[0].hypers.tolist() == [[1.0, 1.0]]
    levels = build_grids(prior, 3, params)
    for tau, lv in enumerate(levels, start=1):
        assert len(lv) == tau
        assert np.all(lv.hypers.sum(axis=1) - 2 == tau - 1)
        assert lv.weights.sum() == pytest.approx(1.0)


def test_each_level_covers_its_expanded_candidates():
    prior = Belief(GammaPoisson(), (1, 1))
    params = GridParams(eps=2.0, m_max=10, radius=20)
    net = eps_net(20, 2.0, "count")
    levels = build_grids(prior, 6, params)
    for prev, lv in zip(levels, levels[1:]):
        E, _ = expand(prev, GammaPoisson(), net)
        assert max(lv.projection_error(h) for h in E) <= 2.0 * (1 + 1e-9)
        # the cap is exceeded only by reinsertions, never beyond the candidate count
        assert len(lv) <= len(E)
        assert lv.weights.sum() == pytest.approx(1.0)


def test_build_grids_deterministic():
    prior = Belief(GammaPoisson(), (1, 1))
    params = GridParams(eps=1.5, m_max=20, radius=20)
    assert serialize_levels(build_grids(prior, 5, params)) == serialize_levels(build_grids(prior, 5, params))


def test_serialization_round_trip():
    levels = build_grids(Belief(GammaPoisson(), (1, 1)), 4, GridParams(2.0, 10, 20))
    back = parse_levels(serialize_levels(levels))
    for a, b in zip(levels, back):
        assert a.tau == b.tau
        assert np.allclose(a.hypers, b.hypers, rtol=1e-11)
        assert np.allclose(a.weights, b.weights, rtol=1e-11)


def test_stationary_grid_contains_root():
    prior = Belief(GammaPoisson(), (1, 1))
    lv = stationary_grid(prior, 4, GridParams(2.0, 10, 20))
    assert lv.projection_error([1.0, 1.0]) == 0.0
    assert lv.weights.sum() == pytest.approx(1.0)


def test_projection_error_examples():
    lv = GridLevel(1, [[1.0, 1.0], [3.0, 2.0]], [0.5, 0.5])
    assert projection_error([3.0, 2.0], lv) == 0.0
    assert error_bound(10, 1.0) == 18.0


def _paths(runs, I, seed):
    rng = np.random.default_rng(seed)
    xs = rng.poisson(10.0, size=(runs, I - 1))
    return np.column_stack([1.0 + xs.sum(axis=1), np.full(runs, float(I))]), xs


def test_projection_error_within_bound_on_bounded_paths():
    I, R = 10, 20
    prior = Belief(GammaPoisson(), (1, 1))
    level = build_grids(prior, I, GridParams(1.0, 10, R))[-1]
    hs, xs = _paths(200, I, 0)
    inside = np.all(xs <= R, axis=1)
    errs = np.array([projection_error(h, level) for h in hs[inside]])
    assert errs.max() <= error_bound(I, 1.0)


def test_larger_node_budget_reduces_median_error():
    I, R = 10, 20
    prior = Belief(GammaPoisson(), (1, 1))
    hs, _ = _paths(100, I, 4)
    med = {}
    for m_max in (10, 100):
        level = build_grids(prior, I, GridParams(1.0, m_max, R))[-1]
        med[m_max] = np.median([projection_error(h, level) for h in hs])
    assert med[100] <= med[10]


def test_normal_family_grid_uses_exact_updates():
    prior = Belief(NormalKnownVar(1.0), (0.0, 1.0))
    levels = build_grids(prior, 3, GridParams(0.5, 50, 3.0))
    # variances follow the deterministic recursion 1 -> 1/2 -> 1/3
    assert np.allclose(levels[1].hypers[:, 1], 0.5)
    assert np.allclose(levels[2].hypers[:, 1], 1 / 3)
