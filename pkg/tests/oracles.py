"""Brute-force reference computations used by the tests."""

from __future__ import annotations

import numpy as np


def grid_qr_loss(X, y, a, lo=-5.0, hi=5.0, step=0.01, chunk=50_000):
    """Lowest mean pinball loss of ``b0 + X @ b`` with slopes on a grid.

    Slopes range over ``[lo, hi]^p`` at resolution `step`; for each slope
    vector the intercept is profiled out exactly (the mean pinball loss in
    ``b0`` is minimized at the order statistic of rank ``ceil(n a)`` of the
    residuals), so the result is at most the loss of the full grid search
    over ``[lo, hi]^(p+1)``.
    """
    n, p = X.shape
    axis = np.round(np.arange(lo, hi + step / 2, step), 10)
    mesh = np.stack(np.meshgrid(*([axis] * p), indexing="ij"), axis=-1).reshape(-1, p)
    k = max(int(np.ceil(n * a - 1e-12)), 1) - 1
    best = np.inf
    for start in range(0, mesh.shape[0], chunk):
        b = mesh[start:start + chunk]
        resid = y[None, :] - b @ X.T
        resid.sort(axis=1)
        b0 = resid[:, k:k + 1]
        u = resid - b0
        loss = np.where(u >= 0, a * u, (a - 1.0) * u).mean(axis=1)
        best = min(best, float(loss.min()))
    return best


def naive_apply(tree, x):
    """Root-to-leaf walk for a single row, one node at a time."""
    node = 0
    while tree.feature[node] != -1:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
    return node


def brute_neighbour_weights(model, x):
    """Forest weights by enumerating every tree's leaf membership."""
    w = np.zeros(model.y.size)
    for tree, members in zip(model.trees, model.leaf_members):
        idx = members[naive_apply(tree, x)]
        w[idx] += 1.0 / idx.size
    return w / len(model.trees)


def brute_weighted_quantile(values, weights, a):
    """Weighted type-7 quantile by explicit position bookkeeping."""
    pairs = sorted((v, w) for v, w in zip(values, weights) if w > 0)
    v = np.array([p[0] for p in pairs])
    w = np.array([p[1] for p in pairs])
    w = w / w.sum()
    if v.size == 1:
        return v[0]
    pos = []
    acc = 0.0
    for wk in w:
        pos.append(acc + wk / 2 - w[0] / 2)
        acc += wk
    pos = np.array(pos) / (1 - w[0] / 2 - w[-1] / 2)
    pos[0], pos[-1] = 0.0, 1.0
    for i in range(v.size - 1):
        if pos[i] <= a <= pos[i + 1]:
            if pos[i + 1] == pos[i]:
                return v[i]
            t = (a - pos[i]) / (pos[i + 1] - pos[i])
            return v[i] + t * (v[i + 1] - v[i])
    return v[-1]


def componentwise_rss(X, u):
    """Residual sum of squares of a least-squares line of `u` on each column."""
    out = []
    for j in range(X.shape[1]):
        A = np.column_stack([np.ones(X.shape[0]), X[:, j]])
        coef, *_ = np.linalg.lstsq(A, u, rcond=None)
        out.append(float(np.sum((u - A @ coef) ** 2)))
    return np.array(out)
