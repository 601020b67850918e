"""Binary regression trees grown by variance reduction.

Trees are stored as flat arrays. Node 0 is the root and the two children
of a split are allocated as a consecutive pair when the split is made;
nodes are expanded depth-first, left subtree first. For node ``k``: ``feature[k]`` is the split
feature or -1 for a leaf, samples with ``x[feature] <= threshold[k]`` go to
``left[k]`` and the rest to ``right[k]``; ``depth[k]`` counts the root as 1.
Leaf payloads live with the learner that owns the tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def apply(self, X) -> np.ndarray:
        """Index of the leaf reached by every row of `X`."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r = rows[active]
            k = node[r]
            go_left = X[r, self.feature[k]] <= self.threshold[k]
            node[r] = np.where(go_left, self.left[k], self.right[k])
            active[r] = self.feature[node[r]] != LEAF
        return node

    def split_depths(self) -> tuple[np.ndarray, np.ndarray]:
        """(feature, depth) of every internal node."""
        internal = ~self.is_leaf
        return self.feature[internal], self.depth[internal]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
            "left": self.left.tolist(), "right": self.right.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=np.int64),
                   np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.int64),
                   np.array(d["right"], dtype=np.int64),
                   np.array(d["depth"], dtype=np.int64))


def best_split(x_sorted, t_sorted, min_leaf: int, est_sorted=None):
    """Best variance-reduction split over presorted candidate columns.

    Parameters
    ----------
    x_sorted, t_sorted : ndarray, shape (m, F)
        Feature values and targets of the node, each column sorted by its
        feature.
    min_leaf : int
        Minimum number of rows on each side.
    est_sorted : ndarray of shape (F, e), optional
        Sorted feature values of estimation rows; when given, each side of
        a valid split must also receive at least one of them.

    Returns
    -------
    (column, left_size, threshold, gain) or None
        Ties in gain go to the lowest column, then the lowest threshold.
    """
    m, n_cols = x_sorted.shape
    if m < 2 * min_leaf:
        return None
    csum = np.cumsum(t_sorted, axis=0)
    total = csum[-1]
    n_left = np.arange(1, m)[:, None].astype(float)
    s_left = csum[:-1]
    s_right = total - s_left
    gain = s_left ** 2 / n_left + s_right ** 2 / (m - n_left) - total ** 2 / m
    valid = x_sorted[:-1] < x_sorted[1:]
    size_ok = np.zeros(m - 1, dtype=bool)
    size_ok[min_leaf - 1:m - min_leaf] = True
    valid &= size_ok[:, None]
    thresholds = 0.5 * (x_sorted[:-1] + x_sorted[1:])
    thresholds = np.where(thresholds >= x_sorted[1:], x_sorted[:-1], thresholds)
    if est_sorted is not None:
        n_est = est_sorted.shape[1]
        counts = np.stack([np.searchsorted(est_sorted[c], thresholds[:, c], side="right")
                           for c in range(n_cols)], axis=1)
        valid &= (counts > 0) & (counts < n_est)
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    # transpose so the flat argmax scans columns first, then positions
    flat = int(np.argmax(gain.T))
    col, pos = divmod(flat, m - 1)
    g = float(gain[pos, col])
    scale = float(np.sum(t_sorted[:, col] ** 2))
    if not g > 1e-12 * max(scale, 1e-300):
        return None
    return col, pos + 1, float(thresholds[pos, col]), g


class TreeBuilder:
    """Accumulates nodes in depth-first order."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.depth: list[int] = []

    def add(self, depth: int) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.depth.append(depth)
        return len(self.feature) - 1

    def set_split(self, node: int, feature: int, threshold: float, left: int, right: int):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> RegressionTree:
        return RegressionTree(np.array(self.feature, dtype=np.int64),
                              np.array(self.threshold, dtype=float),
                              np.array(self.left, dtype=np.int64),
                              np.array(self.right, dtype=np.int64),
                              np.array(self.depth, dtype=np.int64))


def grow_tree(X, target, rows, *, min_leaf: int, max_depth: int | None = None,
              mtry: int | None = None, rng: np.random.Generator | None = None,
              est_rows=None):
    """Grow one variance-reduction tree on ``X[rows]``.

    Nodes are expanded depth-first, left child first, so a seeded `rng`
    draws the per-node candidate features in a fixed order. A node becomes
    a leaf when it is pure, at `max_depth`, smaller than ``2 * min_leaf``,
    or when no split improves the squared error.

    Returns
    -------
    tree : RegressionTree
    leaf_rows : dict
        Leaf node index -> array of rows (from `est_rows` when given,
        otherwise from `rows`) that reach it.
    """
    X = np.asarray(X, dtype=float)
    target = np.asarray(target, dtype=float)
    p = X.shape[1]
    builder = TreeBuilder()
    leaf_rows: dict[int, np.ndarray] = {}
    root = builder.add(1)
    rows = np.asarray(rows)
    est = None if est_rows is None else np.asarray(est_rows)
    stack = [(root, rows, est)]
    while stack:
        node, r, e = stack.pop()
        depth = builder.depth[node]
        t = target[r]
        split = None
        can_split = (r.size >= 2 * min_leaf and (max_depth is None or depth < max_depth)
                     and t.max() > t.min())
        if can_split:
            if mtry is not None and mtry < p:
                cols = np.sort(rng.choice(p, size=mtry, replace=False))
            else:
                cols = np.arange(p)
            xr = X[np.ix_(r, cols)]
            order = np.argsort(xr, axis=0, kind="stable")
            xs = np.take_along_axis(xr, order, axis=0)
            ts = t[order]
            es = None
            if e is not None:
                es = np.sort(X[np.ix_(e, cols)], axis=0).T
            split = best_split(xs, ts, min_leaf, es)
        if split is None:
            leaf_rows[node] = r if e is None else e
            continue
        col, _, thr, _ = split
        f = int(cols[col])
        go_left = X[r, f] <= thr
        left = builder.add(depth + 1)
        right = builder.add(depth + 1)
        builder.set_split(node, f, thr, left, right)
        e_left = e_right = None
        if e is not None:
            e_go = X[e, f] <= thr
            e_left, e_right = e[e_go], e[~e_go]
        # push right first so the left subtree is expanded first
        stack.append((right, r[~go_left], e_right))
        stack.append((left, r[go_left], e_left))
    return builder.build(), leaf_rows
