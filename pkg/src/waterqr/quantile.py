"""Quantile levels, the pinball loss, forecast containers and crossing repair.

Everything else in the package scores and combines forecasts through the
functions defined here, so individual and combined forecasts share a single
scoring path.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_LEVELS: tuple[float, ...] = (0.025, 0.10, 0.50, 0.90, 0.975)


class DomainError(ValueError):
    """Raised when a numeric input lies outside an operation's domain."""


class EmptyOverlapError(ValueError):
    """Raised when a forecast and its observations share no dates."""


def check_level(a: float) -> float:
    a = float(a)
    if not (0.0 < a < 1.0):
        raise DomainError(f"quantile level must lie in (0, 1), got {a!r}")
    return a


def check_levels(levels: Sequence[float]) -> tuple[float, ...]:
    out = tuple(check_level(a) for a in levels)
    if len(out) == 0:
        raise DomainError("at least one quantile level is required")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise DomainError(f"quantile levels must be strictly increasing, got {out}")
    return out


def pinball_loss(r, x, a: float):
    """Quantile score of predictive quantile `r` when `x` materializes.

    Computes ``(r - x) * (1{x <= r} - a)`` elementwise. The tie ``x == r``
    takes the indicator as 1, which gives zero loss either way.

    Parameters
    ----------
    r : float or array_like
        Predicted quantile(s).
    x : float or array_like
        Observation(s), broadcast against `r`.
    a : float
        Quantile level in (0, 1).

    Returns
    -------
    float or ndarray
        Non-negative loss, a scalar when both inputs are scalars.
    """
    a = check_level(a)
    r_arr = np.asarray(r, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(r_arr)) and np.all(np.isfinite(x_arr))):
        raise DomainError("pinball_loss requires finite inputs")
    loss = (r_arr - x_arr) * ((x_arr <= r_arr).astype(float) - a)
    if loss.ndim == 0:
        return float(loss)
    return loss


def empirical_quantile(values, a: float) -> float:
    """Type-7 (linear interpolation of order statistics) empirical quantile."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("empirical quantile of an empty sample")
    return float(np.quantile(v, check_level(a), method="linear"))


def pinball_minimizer(values, a: float) -> float:
    """Empirical quantile that minimizes the mean pinball loss of a sample.

    The minimizers of ``mean(pinball_loss(r, values, a))`` over constants `r`
    form the interval between the order statistics of rank ``ceil(n*a)`` and
    ``floor(n*a) + 1``. The type-7 quantile is returned when it lies inside
    that interval and is otherwise projected onto it, so the result agrees
    with `empirical_quantile` whenever that is already optimal.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    if n == 0:
        raise DomainError("pinball minimizer of an empty sample")
    a = check_level(a)
    na = n * a
    lo_rank = int(np.ceil(na - 1e-12))
    hi_rank = int(np.floor(na + 1e-12)) + 1
    lo = v[min(max(lo_rank, 1), n) - 1]
    hi = v[min(max(hi_rank, 1), n) - 1]
    q7 = float(np.quantile(v, a, method="linear"))
    return float(min(max(q7, lo), hi))


@dataclass(frozen=True)
class ScoreCard:
    level: float
    n: int
    average_score: float
    skipped: int = 0


@dataclass(frozen=True)
class ProbabilisticForecast:
    """Predicted quantiles per date, one column per level.

    Use `repair_crossing` to build one from raw per-level predictions; the
    constructor only validates shape, finiteness and monotonicity.
    """

    dates: tuple[dt.date, ...]
    levels: tuple[float, ...]
    values: np.ndarray
    crossing_rate: float = field(default=0.0, compare=False)

    def __post_init__(self):
        levels = check_levels(self.levels)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.dates), len(levels)):
            raise DomainError(
                f"values must have shape ({len(self.dates)}, {len(levels)}), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("forecast contains non-finite cells")
        if values.shape[1] > 1 and np.any(np.diff(values, axis=1) < 0):
            raise DomainError("forecast quantiles cross; use repair_crossing")
        values.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)

    def column(self, a: float) -> np.ndarray:
        try:
            j = self.levels.index(float(a))
        except ValueError:
            raise KeyError(f"level {a} not in forecast levels {self.levels}") from None
        return self.values[:, j]


def crossing_rate(raw) -> float:
    """Fraction of rows whose quantiles are not non-decreasing."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape[0] == 0 or raw.shape[1] < 2:
        return 0.0
    return float(np.mean(np.any(np.diff(raw, axis=1) < 0, axis=1)))


def repair_crossing(raw, dates: Sequence[dt.date] | None = None,
                    levels: Sequence[float] = DEFAULT_LEVELS) -> ProbabilisticForecast:
    """Sort each row of a raw quantile matrix (monotone rearrangement).

    The pre-repair crossing rate is kept on the result as a diagnostic.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise DomainError("raw quantiles must be a [date x level] matrix")
    if not np.all(np.isfinite(raw)):
        raise DomainError("raw quantiles contain non-finite cells")
    if dates is None:
        dates = tuple(range(raw.shape[0]))
    rate = crossing_rate(raw)
    return ProbabilisticForecast(tuple(dates), tuple(levels), np.sort(raw, axis=1),
                                 crossing_rate=rate)


def average_quantile_score(forecast: ProbabilisticForecast,
                           observed: Mapping[dt.date, float],
                           a: float) -> ScoreCard:
    """Mean pinball loss of one forecast column against dated observations.

    Forecast dates without a finite observation are left out of the mean and
    counted in `ScoreCard.skipped`.
    """
    col = forecast.column(a)
    r, x = [], []
    skipped = 0
    for d, v in zip(forecast.dates, col):
        obs = observed.get(d)
        if obs is None or not np.isfinite(obs):
            skipped += 1
            continue
        r.append(v)
        x.append(obs)
    if not r:
        raise EmptyOverlapError("forecast and observations share no dates")
    score = float(np.mean(pinball_loss(np.array(r), np.array(x), a)))
    return ScoreCard(level=float(a), n=len(r), average_score=score, skipped=skipped)
