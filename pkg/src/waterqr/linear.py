"""Linear quantile regression and componentwise linear quantile boosting.

Both learners work on internally standardized features; coefficients are
exposed in original feature units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .quantile import check_level, empirical_quantile, pinball_loss


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_loss: float = float("nan")):
        super().__init__(message)
        self.last_loss = last_loss


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        # constant columns keep sd = 0 and are dropped by the learners
        sd[sd <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 0.0
        return cls(mean, sd)

    @property
    def retained(self) -> np.ndarray:
        return self.sd > 0

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.mean.size:
            raise DimensionError(f"expected {self.mean.size} features, got shape {X.shape}")
        safe = np.where(self.sd > 0, self.sd, 1.0)
        return (X - self.mean) / safe


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[None, :] if X.ndim == 1 else X


@dataclass(frozen=True)
class LinearQuantileModel:
    level: float
    intercept_std: float
    coef_std: np.ndarray
    scaler: Standardizer

    @classmethod
    def from_original(cls, level: float, intercept: float, coef) -> "LinearQuantileModel":
        coef = np.asarray(coef, dtype=float)
        scaler = Standardizer(np.zeros(coef.size), np.ones(coef.size))
        return cls(check_level(level), float(intercept), coef, scaler)

    @property
    def coef(self) -> np.ndarray:
        """Slopes in original feature units."""
        safe = np.where(self.scaler.sd > 0, self.scaler.sd, 1.0)
        return np.where(self.scaler.sd > 0, self.coef_std / safe, 0.0)

    @property
    def intercept(self) -> float:
        return float(self.intercept_std - np.sum(self.coef * self.scaler.mean))

    def predict(self, X) -> np.ndarray:
        Z = self.scaler.transform(_as_2d(X))
        return self.intercept_std + Z @ self.coef_std

    def to_dict(self) -> dict:
        return {
            "kind": "linear_qr", "version": 1, "level": self.level,
            "intercept_std": self.intercept_std, "coef_std": self.coef_std.tolist(),
            "mean": self.scaler.mean.tolist(), "sd": self.scaler.sd.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearQuantileModel":
        return cls(d["level"], d["intercept_std"], np.array(d["coef_std"], dtype=float),
                   Standardizer(np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float)))


def _mean_loss(pred, y, a) -> float:
    return float(np.mean(pinball_loss(pred, y, a)))


def fit_linear_qr(X, y, a: float) -> LinearQuantileModel:
    """Linear quantile regression by exact linear programming.

    Minimizes the mean pinball loss of ``b0 + Z @ b`` over standardized
    features ``Z`` (constant columns get a zero slope). The LP
    ``min a*1'u+ + (1-a)*1'u-  s.t.  b0 + Z b + u+ - u- = y`` is solved with
    HiGHS; the vertex solution is then re-solved exactly on its interpolated
    points, keeping whichever parameter vector has the lower loss.

    Raises
    ------
    ConvergenceError
        If the LP solver does not report an optimal solution.
    """
    a = check_level(a)
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DimensionError("y must have one value per row of X")
    scaler = Standardizer.fit(X)
    keep = np.flatnonzero(scaler.retained)
    Z = np.column_stack([np.ones(n), scaler.transform(X)[:, keep]])
    k = Z.shape[1]

    # y is centred and scaled for conditioning; the LP is equivariant
    y_loc = float(np.median(y))
    y_scale = float(np.std(y)) or 1.0
    ys = (y - y_loc) / y_scale
    c = np.concatenate([np.zeros(k), np.full(n, a), np.full(n, 1.0 - a)]) / n
    A_eq = np.hstack([Z, np.eye(n), -np.eye(n)]) if n <= 400 else None
    if A_eq is None:
        from scipy.sparse import csr_matrix, hstack, identity
        I = identity(n, format="csr")
        A_eq = hstack([csr_matrix(Z), I, -I], format="csr")
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=ys, bounds=bounds, method="highs")
    if res.status != 0 or res.x is None:
        raise ConvergenceError(f"linear QR solver failed: {res.message}",
                               last_loss=float("nan") if res.fun is None else res.fun * y_scale)
    beta = res.x[:k]
    loss = _mean_loss(Z @ beta, ys, a)

    # refine the vertex: interpolate the k points with the smallest residuals
    resid = np.abs(ys - Z @ beta)
    basis = np.argsort(resid, kind="stable")[:k]
    try:
        exact = np.linalg.solve(Z[basis], ys[basis])
        exact_loss = _mean_loss(Z @ exact, ys, a)
        if np.all(np.isfinite(exact)) and exact_loss <= loss:
            beta, loss = exact, exact_loss
    except np.linalg.LinAlgError:
        pass

    coef_std = np.zeros(p)
    coef_std[keep] = beta[1:] * y_scale
    intercept_std = float(beta[0] * y_scale + y_loc)
    return LinearQuantileModel(a, intercept_std, coef_std, scaler)


@dataclass(frozen=True)
class LinearBoostModel:
    """Componentwise linear boosting fit, stored as a replayable step log.

    Step ``m`` adds ``nu[m] * (intercept[m] + slope[m] * z[feature[m]])``,
    where ``z`` is the standardized feature vector.
    """

    level: float
    offset: float
    scaler: Standardizer
    feature: np.ndarray
    intercept: np.ndarray
    slope: np.ndarray
    nu: np.ndarray

    @property
    def m_stop(self) -> int:
        return int(self.feature.size)

    def predict(self, X, m: int | None = None) -> np.ndarray:
        Z = self.scaler.transform(_as_2d(X))
        f = np.full(Z.shape[0], self.offset)
        stop = self.m_stop if m is None else m
        for j, b0, b1, nu in zip(self.feature[:stop], self.intercept[:stop],
                                 self.slope[:stop], self.nu[:stop]):
            f = f + nu * (b0 + b1 * Z[:, j])
        return f

    @property
    def coef(self) -> np.ndarray:
        """Accumulated slopes in original feature units."""
        acc = np.zeros(self.scaler.mean.size)
        np.add.at(acc, self.feature, self.nu * self.slope)
        safe = np.where(self.scaler.sd > 0, self.scaler.sd, 1.0)
        return acc / safe

    def to_dict(self) -> dict:
        return {
            "kind": "linear_boost", "version": 1, "level": self.level, "offset": self.offset,
            "mean": self.scaler.mean.tolist(), "sd": self.scaler.sd.tolist(),
            "steps": [[int(j), float(b0), float(b1), float(nu)] for j, b0, b1, nu in
                      zip(self.feature, self.intercept, self.slope, self.nu)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearBoostModel":
        steps = np.array(d["steps"], dtype=float).reshape(-1, 4)
        return cls(d["level"], d["offset"],
                   Standardizer(np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float)),
                   steps[:, 0].astype(int), steps[:, 1].copy(), steps[:, 2].copy(),
                   steps[:, 3].copy())


def _boost(Z, y, a, offset, retained, m_stop, nu, scale=1.0, trace=None):
    n = Z.shape[0]
    f = np.full(n, offset)
    feats = np.empty(m_stop, dtype=int)
    b0s = np.empty(m_stop)
    b1s = np.empty(m_stop)
    for m in range(m_stop):
        u = np.where(y > f, a, a - 1.0)
        ubar = u.mean()
        uc = u - ubar
        # with standardized columns, the least-squares slope is z.u / n
        slopes = (Z.T @ uc) / n
        rss = np.where(retained, np.sum(uc * uc) - n * slopes * slopes, np.inf)
        j = int(np.argmin(rss))
        b1 = float(slopes[j]) if retained[j] else 0.0
        # steps are in target-sd units, which keeps the fit scale-equivariant
        b0, b1 = ubar * scale, b1 * scale
        feats[m], b0s[m], b1s[m] = j, b0, b1
        f = f + nu * (b0 + b1 * Z[:, j])
        if trace is not None:
            trace.append(float(np.mean(pinball_loss(f, y, a))))
    return feats, b0s, b1s, f


def fit_linear_boost(X, y, a: float, m_stop: int = 2000, nu: float = 0.1,
                     validation_fraction: float | None = None,
                     trace: list | None = None) -> LinearBoostModel:
    """Componentwise linear gradient boosting under the pinball loss.

    Starts from the type-7 empirical `a`-quantile of `y`. Each iteration
    fits a least-squares line of the negative pinball gradient on every
    standardized feature separately, keeps the one with the lowest residual
    sum of squares (lowest index on ties) and adds `nu` times it, scaled by
    the standard deviation of `y` so that the fit is equivariant to the
    target's units.

    Parameters
    ----------
    m_stop : int
        Number of boosting iterations (a fixed budget by default).
    nu : float
        Shrinkage in (0, 1].
    validation_fraction : float, optional
        If given, the last fraction of rows is held out, the iteration with
        the lowest held-out loss is found, and the model is refit on all rows
        for that many iterations.
    trace : list, optional
        Receives the training mean pinball loss after every iteration.
    """
    a = check_level(a)
    if m_stop < 0:
        raise ValueError("m_stop must be non-negative")
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise DimensionError("y must have one value per row of X")

    if validation_fraction is not None:
        n_fit = int(np.floor(X.shape[0] * (1.0 - validation_fraction)))
        if n_fit < 2 or n_fit >= X.shape[0]:
            raise ValueError("validation_fraction leaves no rows on one side")
        probe = fit_linear_boost(X[:n_fit], y[:n_fit], a, m_stop, nu)
        Xv, yv = X[n_fit:], y[n_fit:]
        Zv = probe.scaler.transform(Xv)
        f = np.full(Xv.shape[0], probe.offset)
        losses = [_mean_loss(f, yv, a)]
        for j, b0, b1, s in zip(probe.feature, probe.intercept, probe.slope, probe.nu):
            f = f + s * (b0 + b1 * Zv[:, j])
            losses.append(_mean_loss(f, yv, a))
        m_stop = int(np.argmin(losses))

    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    offset = empirical_quantile(y, a)
    scale = float(np.std(y)) or 1.0
    feats, b0s, b1s, _ = _boost(Z, y, a, offset, scaler.retained, m_stop, nu, scale, trace)
    return LinearBoostModel(a, offset, scaler, feats, b0s, b1s, np.full(m_stop, float(nu)))
