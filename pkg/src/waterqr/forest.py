"""Weighted-neighbour quantile forest and its split-frequency importance.

Each tree is grown by variance reduction on a subsample; its leaves keep the
indices of the training rows that landed there. For a query ``x`` the
neighbour weight of training row ``i`` is the mean over trees of
``1{i in leaf_t(x)} / |leaf_t(x)|`` and the predicted quantiles are those of
the weighted empirical distribution of the training targets.

Per-tree randomness comes from ``numpy.random.default_rng([seed, t, 0])``
(subsample draw), ``default_rng([seed, t, 1])`` (candidate features at
each node) and ``default_rng([seed, t, 2])`` (honest halving), so results do not depend on the order trees are grown in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .quantile import check_levels
from .tree import RegressionTree, grow_tree


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 2000
    sample_fraction: float = 0.5
    min_leaf: int = 5
    mtry: int | None = None
    honest: bool = False
    max_depth: int | None = None


@dataclass(frozen=True)
class QuantileForestModel:
    trees: tuple[RegressionTree, ...]
    leaf_members: tuple[dict, ...]
    y: np.ndarray
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))

    def neighbour_weights(self, X) -> sparse.csr_matrix:
        """Sparse [query x training row] matrix of forest neighbour weights."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        n_q, n = X.shape[0], self.y.size
        q_rows, q_cols, m_rows, m_cols, m_vals = [], [], [], [], []
        offset = 0
        for tree, members in zip(self.trees, self.leaf_members):
            leaves = tree.apply(X)
            q_rows.append(np.arange(n_q))
            q_cols.append(leaves + offset)
            for leaf, idx in members.items():
                if idx.size:
                    m_rows.append(np.full(idx.size, leaf + offset))
                    m_cols.append(idx)
                    m_vals.append(np.full(idx.size, 1.0 / idx.size))
            offset += tree.n_nodes
        if not q_rows:
            raise FitError("forest has no trees")
        Q = sparse.csr_matrix((np.ones(n_q * len(self.trees)),
                               (np.concatenate(q_rows), np.concatenate(q_cols))),
                              shape=(n_q, offset))
        M = sparse.csr_matrix((np.concatenate(m_vals),
                               (np.concatenate(m_rows), np.concatenate(m_cols))),
                              shape=(offset, n))
        W = (Q @ M) / len(self.trees)
        W.sort_indices()
        return W

    def predict_quantiles(self, X, levels: Sequence[float]) -> np.ndarray:
        """Quantiles of the weighted neighbour distribution, shape [query x level]."""
        levels = np.asarray(check_levels(levels))
        W = self.neighbour_weights(X)
        out = np.empty((W.shape[0], levels.size))
        for i in range(W.shape[0]):
            lo, hi = W.indptr[i], W.indptr[i + 1]
            out[i] = weighted_quantile(self.y[W.indices[lo:hi]], W.data[lo:hi], levels)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "forest", "version": 1, "seed": self.seed, "params": self.params.__dict__,
            "n_features": self.n_features, "y": self.y.tolist(),
            "trees": [dict(t.to_dict(), leaves={str(k): v.tolist() for k, v in sorted(m.items())})
                      for t, m in zip(self.trees, self.leaf_members)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileForestModel":
        trees = tuple(RegressionTree.from_dict(t) for t in d["trees"])
        members = tuple({int(k): np.array(v, dtype=np.int64) for k, v in t["leaves"].items()}
                        for t in d["trees"])
        return cls(trees, members, np.array(d["y"], dtype=float), d["n_features"],
                   ForestParams(**d["params"]), d["seed"])


def weighted_quantile(values, weights, levels) -> np.ndarray:
    """Weighted generalization of the type-7 empirical quantile.

    Zero-weight points are dropped and the rest sorted by value. With
    normalized weights ``w`` and cumulative sums ``S``, point ``k`` sits at
    ``p_k = (S_k - w_k/2 - w_1/2) / (1 - w_1/2 - w_m/2)``, which runs from 0
    at the smallest value to 1 at the largest and reduces to
    ``(k - 1) / (m - 1)`` for equal weights. Quantiles interpolate linearly
    between these positions; a single point returns its value at every level.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    keep = weights > 0
    v, w = values[keep], weights[keep]
    if v.size == 0:
        raise ValueError("no positive weights")
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order] / w.sum()
    if v.size == 1:
        return np.full(levels.size, v[0])
    cum = np.cumsum(w)
    denom = 1.0 - 0.5 * (w[0] + w[-1])
    pos = (cum - 0.5 * w - 0.5 * w[0]) / denom
    pos[0], pos[-1] = 0.0, 1.0
    return np.interp(levels, pos, v)


def tree_rng(seed: int, tree: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree, stream])


def fit_quantile_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0,
                        subsamples: Sequence[np.ndarray] | None = None) -> QuantileForestModel:
    """Grow the forest; one fit serves every quantile level.

    Parameters
    ----------
    subsamples : sequence of index arrays, optional
        Explicit per-tree subsamples replacing the seeded draw (used to
        compare fits on permuted data).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y must have one value per row of X")
    if n < 2 * params.min_leaf:
        raise FitError(f"need at least {2 * params.min_leaf} samples, got {n}")
    mtry = params.mtry if params.mtry is not None else math.ceil(math.sqrt(p))
    n_sub = min(max(int(np.floor(params.sample_fraction * n)), 2 * params.min_leaf), n)

    trees, members = [], []
    for t in range(params.n_trees):
        if subsamples is not None:
            sub = np.asarray(subsamples[t])
        elif n_sub < n:
            sub = np.sort(tree_rng(seed, t, 0).choice(n, size=n_sub, replace=False))
        else:
            sub = np.arange(n)
        est = None
        if params.honest:
            shuffled = tree_rng(seed, t, 2).permutation(sub)
            half = sub.size // 2
            split_rows, est = np.sort(shuffled[:half]), np.sort(shuffled[half:])
        else:
            split_rows = sub
        tree, leaf_rows = grow_tree(X, y, split_rows, min_leaf=params.min_leaf,
                                    max_depth=params.max_depth, mtry=mtry,
                                    rng=tree_rng(seed, t, 1), est_rows=est)
        trees.append(tree)
        members.append({int(k): np.asarray(v, dtype=np.int64) for k, v in leaf_rows.items()})
    return QuantileForestModel(tuple(trees), tuple(members), y, p, params, seed)


def forest_variable_importance(model: QuantileForestModel, max_depth: int = 4,
                               decay: float = 2.0) -> np.ndarray:
    """Depth-weighted split-frequency importance, summing to 1.

    Within each tree, splits at depths 1..`max_depth` (root = 1) are counted
    per feature with weight ``depth ** -decay`` and normalized by the
    tree's total weight. Trees without such splits are left out of the
    average over trees; a forest without any split gets uniform importance.
    """
    n_features = model.n_features
    per_tree = []
    for tree in model.trees:
        feats, depths = tree.split_depths()
        keep = depths <= max_depth
        if not keep.any():
            continue
        w = depths[keep].astype(float) ** -decay
        counts = np.bincount(feats[keep], weights=w, minlength=n_features)
        per_tree.append(counts / counts.sum())
    if not per_tree:
        return np.full(n_features, 1.0 / n_features)
    imp = np.mean(per_tree, axis=0)
    return imp / imp.sum()
