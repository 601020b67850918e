"""Quantile regression neural network with a single sigmoid hidden node.

Training minimizes a Huber-smoothed pinball loss whose smoothing width is
annealed towards zero, warm-starting each stage from the previous one.
Inputs and the target are standardized internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .linear import DimensionError, Standardizer
from .quantile import DomainError, check_level

DEFAULT_SCHEDULE = tuple(2.0 ** -k for k in range(1, 13))


class FitError(RuntimeError):
    pass


def huber(u, eps: float):
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    if eps == 0:
        return au
    inside = au <= eps
    return np.where(inside, np.where(inside, u * u, 0.0) / (2.0 * eps), au - eps / 2.0)


def huber_derivative(u, eps: float):
    u = np.asarray(u, dtype=float)
    if eps == 0:
        return np.sign(u)
    return np.where(np.abs(u) <= eps, u / eps, np.sign(u))


def smoothed_pinball(r, x, a: float, eps: float):
    """Pinball loss with its kink replaced by a Huber ramp of half-width `eps`.

    With ``u = x - r`` the loss is ``a * h(u)`` for ``u >= 0`` and
    ``(1 - a) * h(u)`` otherwise, where ``h(u) = u**2 / (2 eps)`` for
    ``|u| <= eps`` and ``|u| - eps/2`` beyond. ``eps = 0`` gives the plain
    pinball loss.
    """
    a = check_level(a)
    if eps < 0:
        raise DomainError("smoothing width must be non-negative")
    u = np.asarray(x, dtype=float) - np.asarray(r, dtype=float)
    out = np.where(u >= 0, a, 1.0 - a) * huber(u, eps)
    return float(out) if out.ndim == 0 else out


def smoothed_pinball_grad_r(r, x, a: float, eps: float):
    """Derivative of `smoothed_pinball` with respect to the prediction `r`."""
    u = np.asarray(x, dtype=float) - np.asarray(r, dtype=float)
    out = -np.where(u >= 0, a, 1.0 - a) * huber_derivative(u, eps)
    return float(out) if out.ndim == 0 else out


def _unpack(theta, p):
    return theta[:p], theta[p], theta[p + 1], theta[p + 2]


def network_output(theta, Z) -> np.ndarray:
    w, b_h, w_out, b_out = _unpack(theta, Z.shape[1])
    return w_out * expit(Z @ w + b_h) + b_out


def objective(theta, Z, t, a: float, eps: float, penalty: float = 0.0):
    """Mean smoothed pinball loss of the network and its gradient in `theta`."""
    n, p = Z.shape
    w, b_h, w_out, b_out = _unpack(theta, p)
    h = expit(Z @ w + b_h)
    r = w_out * h + b_out
    u = t - r
    weight = np.where(u >= 0, a, 1.0 - a)
    loss = float(np.mean(weight * huber(u, eps))) + penalty * float(w @ w)
    d_r = -weight * huber_derivative(u, eps) / n
    d_z = d_r * w_out * h * (1.0 - h)
    grad = np.empty_like(theta)
    grad[:p] = Z.T @ d_z + 2.0 * penalty * w
    grad[p] = d_z.sum()
    grad[p + 1] = d_r @ h
    grad[p + 2] = d_r.sum()
    return loss, grad


@dataclass(frozen=True)
class QrnnModel:
    level: float
    theta: np.ndarray
    scaler: Standardizer
    y_mean: float
    y_sd: float
    final_loss: float
    schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    restarts_used: int = 0
    restarts_abandoned: int = 0
    best_restart: int = 0
    penalty: float = 0.0

    @property
    def n_features(self) -> int:
        return self.scaler.mean.size

    @property
    def input_weights(self) -> np.ndarray:
        return self.theta[:self.n_features]

    def predict_standardized(self, Z) -> np.ndarray:
        return network_output(self.theta, np.asarray(Z, dtype=float))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        Z = self.scaler.transform(X)
        return self.y_mean + self.y_sd * self.predict_standardized(Z)

    def to_dict(self) -> dict:
        p = self.n_features
        return {
            "kind": "qrnn", "version": 1, "level": self.level,
            "input_weights": self.theta[:p].tolist(), "hidden_bias": float(self.theta[p]),
            "output_weight": float(self.theta[p + 1]), "output_bias": float(self.theta[p + 2]),
            "mean": self.scaler.mean.tolist(), "sd": self.scaler.sd.tolist(),
            "y_mean": self.y_mean, "y_sd": self.y_sd, "final_loss": self.final_loss,
            "schedule": list(self.schedule), "restarts_used": self.restarts_used,
            "restarts_abandoned": self.restarts_abandoned, "best_restart": self.best_restart,
            "penalty": self.penalty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QrnnModel":
        theta = np.array(d["input_weights"] + [d["hidden_bias"], d["output_weight"],
                                               d["output_bias"]], dtype=float)
        return cls(d["level"], theta,
                   Standardizer(np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float)),
                   d["y_mean"], d["y_sd"], d["final_loss"], tuple(d["schedule"]),
                   d["restarts_used"], d["restarts_abandoned"], d["best_restart"], d["penalty"])


def fit_qrnn(X, y, a: float, schedule=DEFAULT_SCHEDULE, restarts: int = 5, seed: int = 0,
             max_iter: int = 500, gtol: float = 1e-6, penalty: float = 0.0,
             trace: list | None = None) -> QrnnModel:
    """Fit a one-hidden-node QRNN for level `a`.

    Each restart draws initial weights uniformly from [-0.5, 0.5] with
    ``numpy.random.default_rng([seed, restart])`` and runs L-BFGS on the
    smoothed loss for each width in `schedule` (in units of the target
    standard deviation), warm-starting every stage. The restart with the
    lowest loss at the last width wins; ties go to the lower index.

    Parameters
    ----------
    trace : list, optional
        Receives one list per restart of ``(eps, [loss per accepted step])``.
    """
    a = check_level(a)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionError("X must be [samples x features] with one y per row")
    schedule = tuple(float(e) for e in schedule)
    if not schedule or any(e < 0 for e in schedule):
        raise DomainError("schedule must be a non-empty sequence of non-negative widths")
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    Z[:, ~scaler.retained] = 0.0
    y_mean = float(np.mean(y))
    y_sd = float(np.std(y))
    if y_sd <= 1e-12 * max(1.0, abs(y_mean)):
        y_sd = 1.0
    t = (y - y_mean) / y_sd
    p = Z.shape[1]

    best = None
    abandoned = 0
    for k in range(restarts):
        theta = np.random.default_rng([seed, k]).uniform(-0.5, 0.5, size=p + 3)
        stages = []
        ok = True
        for eps in schedule:
            steps: list[float] = []
            callback = None
            if trace is not None:
                def callback(xk, _eps=eps, _steps=steps):
                    _steps.append(objective(xk, Z, t, a, _eps, penalty)[0])
            res = minimize(objective, theta, args=(Z, t, a, eps, penalty), jac=True,
                           method="L-BFGS-B", callback=callback,
                           options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0})
            if not (np.isfinite(res.fun) and np.all(np.isfinite(res.x))):
                ok = False
                break
            theta = res.x
            stages.append((eps, steps))
        if trace is not None:
            trace.append(stages)
        if not ok:
            abandoned += 1
            continue
        loss = objective(theta, Z, t, a, schedule[-1], penalty)[0]
        if best is None or loss < best[0]:
            best = (loss, k, theta)
    if best is None:
        raise FitError(f"all {restarts} QRNN restarts produced non-finite losses")
    loss, k, theta = best
    return QrnnModel(a, theta, scaler, y_mean, y_sd, float(loss), schedule,
                     restarts, abandoned, k, penalty)
