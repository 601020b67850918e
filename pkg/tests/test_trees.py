from __future__ import annotations

import json

import numpy as np
import pytest
from conftest import informative_lag_data
from oracles import brute_neighbour_weights, brute_weighted_quantile, naive_apply

from waterqr.forest import (ForestParams, QuantileForestModel, fit_quantile_forest,
                            forest_variable_importance, weighted_quantile)
from waterqr.gbm import GbmParams, GbmQuantileModel, fit_gbm_quantile
from waterqr.quantile import DEFAULT_LEVELS, empirical_quantile, pinball_loss
from waterqr.tree import LEAF, RegressionTree, best_split, grow_tree


def step_data(n=200):
    x = np.linspace(0, 1, n, endpoint=False)
    x = x[(x < 0.49) | (x >= 0.51)]
    return x[:, None], np.where(x < 0.5, 0.0, 10.0)


# trees

def test_best_split_matches_exhaustive_midpoints(rng):
    X = rng.normal(size=(80, 3))
    t = np.sin(2 * X[:, 1]) + 0.1 * rng.normal(size=80)
    order = np.argsort(X, axis=0, kind="stable")
    col, n_left, thr, gain = best_split(np.take_along_axis(X, order, 0), t[order], 5)
    best = (-np.inf, None)
    for j in range(3):
        xs = np.unique(X[:, j])
        for lo, hi in zip(xs[:-1], xs[1:]):
            c = 0.5 * (lo + hi)
            left = X[:, j] <= c
            if left.sum() < 5 or (~left).sum() < 5:
                continue
            g = (t[left].sum() ** 2 / left.sum() + t[~left].sum() ** 2 / (~left).sum()
                 - t.sum() ** 2 / t.size)
            if g > best[0] + 1e-12:
                best = (g, (j, c))
    assert (col, thr) == pytest.approx(best[1])
    assert gain == pytest.approx(best[0])


def test_split_ties_go_to_lowest_feature():
    x = np.arange(20.0)
    X = np.column_stack([x, x, x])
    t = (x >= 10).astype(float)
    tree, _ = grow_tree(X, t, np.arange(20), min_leaf=1, max_depth=2)
    assert tree.feature[0] == 0 and tree.threshold[0] == 9.5


def test_apply_matches_naive_walk(rng):
    X = rng.normal(size=(300, 5))
    t = X[:, 0] * X[:, 2] + rng.normal(size=300)
    for seed in range(5):
        tree, leaves = grow_tree(X, t, np.arange(300), min_leaf=3, mtry=2,
                                 rng=np.random.default_rng(seed))
        Q = rng.normal(size=(100, 5))
        np.testing.assert_array_equal(tree.apply(Q), [naive_apply(tree, q) for q in Q])
        assert all(tree.feature[k] == LEAF for k in leaves)
        back = RegressionTree.from_dict(json.loads(json.dumps(tree.to_dict())))
        np.testing.assert_array_equal(back.apply(Q), tree.apply(Q))


# gbm

def test_gbm_zero_trees_is_initial(rng):
    X = rng.normal(size=(100, 3))
    y = rng.normal(size=100)
    m = fit_gbm_quantile(X, y, 0.9, GbmParams(n_trees=0))
    np.testing.assert_array_equal(m.predict(X), empirical_quantile(y, 0.9))


def test_gbm_zero_learning_rate(rng):
    X = rng.normal(size=(100, 3))
    y = rng.normal(size=100)
    m = fit_gbm_quantile(X, y, 0.3, GbmParams(n_trees=20, learning_rate=0.0))
    np.testing.assert_array_equal(m.predict(X), empirical_quantile(y, 0.3))


def test_gbm_stump_threshold_in_gap():
    X, y = step_data()
    m = fit_gbm_quantile(X, y, 0.5, GbmParams(n_trees=1, max_depth=2, bag_fraction=1.0))
    tree = m.trees[0]
    assert 0.49 < tree.threshold[0] < 0.51
    assert tree.n_nodes == 3


@pytest.mark.parametrize("a", DEFAULT_LEVELS)
def test_gbm_monotone_full_bag(rng, a):
    X = rng.normal(size=(150, 4))
    y = X[:, 0] + np.abs(X[:, 1]) * rng.normal(size=150)
    trace = []
    m = fit_gbm_quantile(X, y, a, GbmParams(n_trees=100, bag_fraction=1.0), trace=trace)
    losses = np.array([np.mean(pinball_loss(np.full(150, m.initial), y, a))] + trace)
    assert np.all(np.diff(losses) <= 1e-12)


def test_gbm_deterministic_and_serializable(rng):
    X = rng.normal(size=(120, 4))
    y = X[:, 0] + rng.normal(size=120)
    p = GbmParams(n_trees=30)
    m1 = fit_gbm_quantile(X, y, 0.5, p, seed=3)
    m2 = fit_gbm_quantile(X, y, 0.5, p, seed=3)
    np.testing.assert_array_equal(m1.predict(X), m2.predict(X))
    back = GbmQuantileModel.from_dict(json.loads(json.dumps(m1.to_dict())))
    np.testing.assert_array_equal(back.predict(X), m1.predict(X))
    assert not np.array_equal(fit_gbm_quantile(X, y, 0.5, p, seed=4).predict(X), m1.predict(X))


# forest

def test_forest_constant_target(rng):
    X = rng.normal(size=(60, 4))
    m = fit_quantile_forest(X, np.full(60, 2.5), ForestParams(n_trees=10))
    np.testing.assert_array_equal(m.predict_quantiles(X[:5], DEFAULT_LEVELS), 2.5)


def test_forest_weights_sum_to_one_and_match_enumeration(rng):
    X = rng.normal(size=(30, 3))
    y = X[:, 0] + rng.normal(size=30)
    m = fit_quantile_forest(X, y, ForestParams(n_trees=15, min_leaf=2), seed=1)
    Q = rng.normal(size=(10, 3))
    W = m.neighbour_weights(Q).toarray()
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    pred = m.predict_quantiles(Q, DEFAULT_LEVELS)
    for i, q in enumerate(Q):
        w = brute_neighbour_weights(m, q)
        np.testing.assert_allclose(W[i], w, atol=1e-15)
        for j, a in enumerate(DEFAULT_LEVELS):
            assert pred[i, j] == pytest.approx(brute_weighted_quantile(y, w, a), abs=1e-12)


def test_weighted_quantile_special_cases(rng):
    v = rng.normal(size=25)
    np.testing.assert_allclose(weighted_quantile(v, np.ones(25), DEFAULT_LEVELS),
                               [empirical_quantile(v, a) for a in DEFAULT_LEVELS], atol=1e-12)
    w = np.zeros(25)
    w[7] = 1.0
    np.testing.assert_array_equal(weighted_quantile(v, w, DEFAULT_LEVELS), v[7])


def test_single_leaf_forest_gives_empirical_quantiles(rng):
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    m = fit_quantile_forest(X, y, ForestParams(n_trees=1, sample_fraction=1.0, max_depth=1))
    np.testing.assert_allclose(m.predict_quantiles(X[:3], DEFAULT_LEVELS),
                               np.tile([empirical_quantile(y, a) for a in DEFAULT_LEVELS], (3, 1)),
                               atol=1e-12)


def test_forest_two_clusters(rng):
    n = 400
    g = np.repeat([0, 1], n // 2)
    X = np.column_stack([g * 10 + rng.normal(size=n), rng.normal(size=(n, 2))])
    y = np.where(g == 0, rng.normal(0, 1, n), rng.exponential(3, n) + 20)
    # within a cluster x carries no information; large leaves keep the local
    # median from chasing noise splits (min_leaf=5 leaves ~10 neighbours)
    m = fit_quantile_forest(X, y, ForestParams(n_trees=100, min_leaf=40), seed=0)
    med = m.predict_quantiles(np.array([[0.0, 0, 0], [10.0, 0, 0]]), [0.5])[:, 0]
    for k in (0, 1):
        lo, hi = np.quantile(y[g == k], [0.4, 0.6])
        assert lo <= med[k] <= hi


def test_forest_permutation_invariance(rng):
    X = rng.normal(size=(80, 3))
    y = X[:, 1] + rng.normal(size=80)
    subs = [np.sort(np.random.default_rng(t).choice(80, 40, replace=False)) for t in range(10)]
    perm = rng.permutation(80)
    inv = np.argsort(perm)
    p = ForestParams(n_trees=10)
    m1 = fit_quantile_forest(X, y, p, seed=5, subsamples=subs)
    m2 = fit_quantile_forest(X[perm], y[perm], p, seed=5,
                             subsamples=[np.sort(inv[s]) for s in subs])
    Q = rng.normal(size=(20, 3))
    # identical trees; only the summation order of the weights differs
    np.testing.assert_allclose(m1.predict_quantiles(Q, DEFAULT_LEVELS),
                               m2.predict_quantiles(Q, DEFAULT_LEVELS), rtol=0, atol=1e-12)


def test_forest_deterministic_and_serializable(rng):
    X = rng.normal(size=(60, 3))
    y = X[:, 0] + rng.normal(size=60)
    m = fit_quantile_forest(X, y, ForestParams(n_trees=8, honest=True), seed=2)
    m2 = fit_quantile_forest(X, y, ForestParams(n_trees=8, honest=True), seed=2)
    back = QuantileForestModel.from_dict(json.loads(json.dumps(m.to_dict())))
    for other in (m2, back):
        np.testing.assert_array_equal(other.predict_quantiles(X, DEFAULT_LEVELS),
                                      m.predict_quantiles(X, DEFAULT_LEVELS))


def test_importance_single_feature_and_zero_split(rng):
    X = rng.normal(size=(100, 52))
    y = (X[:, 7] > 0).astype(float)
    m = fit_quantile_forest(X, y, ForestParams(n_trees=5, mtry=52, max_depth=2))
    imp = forest_variable_importance(m)
    assert imp[7] == 1.0 and imp.sum() == 1.0
    m0 = fit_quantile_forest(X, np.ones(100), ForestParams(n_trees=3))
    np.testing.assert_array_equal(forest_variable_importance(m0), 1 / 52)


def test_importance_is_distribution(rng):
    X, y = informative_lag_data(1, n=200)
    imp = forest_variable_importance(fit_quantile_forest(X, y, ForestParams(n_trees=30)))
    assert np.all(imp >= 0)
    assert imp.sum() == pytest.approx(1.0, abs=1e-12)
    assert int(np.argmax(imp)) == 0
