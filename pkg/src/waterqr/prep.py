"""Daily aggregation, outlier cleaning and the 52-predictor supervised set."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .smoother import MIN_POINTS, super_smooth

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440

METEO_COLUMNS: tuple[str, ...] = (
    "t_high", "t_avg", "t_low",
    "d_high", "d_avg", "d_low",
    "h_high", "h_avg", "h_low",
    "s_high", "s_avg", "s_low",
    "p_high", "p_low",
    "r_total",
)
FLOW_LAGS = 7
METEO_LAGS = 3


def _feature_label(column: str) -> str:
    var, stat = column.split("_")
    return f"{var.upper()}_{stat}"


FEATURE_NAMES: tuple[str, ...] = tuple(
    [f"F_avg_t-{k}" for k in range(1, FLOW_LAGS + 1)]
    + [f"{_feature_label(c)}_t-{k}" for c in METEO_COLUMNS for k in range(1, METEO_LAGS + 1)]
)
assert len(FEATURE_NAMES) == 52


class EmptySetError(ValueError):
    """No sample satisfies the lag-window eligibility rule."""


class SplitError(ValueError):
    pass


def _as_days(dates) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]")


@dataclass(frozen=True)
class RawFlowSeries:
    """Sub-daily flow readings (L/s) at minute resolution; NaN marks a missing reading."""

    gauge_id: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[m]")
        vals = np.asarray(self.values, dtype=float)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise ValueError("timestamps and values must be 1-d and equally long")
        if ts.size > 1 and np.any(np.diff(ts) <= np.timedelta64(0, "m")):
            raise ValueError(f"{self.gauge_id}: timestamps must be strictly increasing")
        if np.any(vals[~np.isnan(vals)] < 0):
            raise ValueError(f"{self.gauge_id}: negative flow values")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class DailySeries:
    """Gap-free daily mean flow; NaN marks a missing day."""

    gauge_id: str
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = _as_days(self.dates)
        vals = np.asarray(self.values, dtype=float)
        if dates.shape != vals.shape or dates.ndim != 1:
            raise ValueError("dates and values must be 1-d and equally long")
        if dates.size > 1 and np.any(np.diff(dates) != np.timedelta64(1, "D")):
            raise ValueError(f"{self.gauge_id}: daily dates must be consecutive")
        if np.any(vals[~np.isnan(vals)] < 0):
            raise ValueError(f"{self.gauge_id}: negative daily flow")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", vals)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_present(self) -> int:
        return int(np.sum(~self.missing))


@dataclass(frozen=True)
class MeteoTable:
    """Daily meteorological records, one column per name in `METEO_COLUMNS`."""

    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = _as_days(self.dates)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (dates.size, len(METEO_COLUMNS)):
            raise ValueError(f"meteo values must have shape ({dates.size}, {len(METEO_COLUMNS)})")
        if dates.size > 1 and np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise ValueError("meteo dates must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("meteo table contains missing values")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SupervisedSet:
    gauge_id: str
    dates: np.ndarray
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = field(default=FEATURE_NAMES)

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_days(self.dates))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.X.shape != (self.dates.size, len(self.feature_names)):
            raise ValueError("X must be [samples x features]")
        if self.y.shape != self.dates.shape:
            raise ValueError("y must have one value per sample")

    def __len__(self) -> int:
        return int(self.dates.size)

    def subset(self, index) -> "SupervisedSet":
        return SupervisedSet(self.gauge_id, self.dates[index], self.X[index], self.y[index],
                             self.feature_names)


@dataclass(frozen=True)
class OutlierReport:
    gauge_id: str
    flagged: tuple[np.datetime64, ...]
    lower: float
    upper: float


def aggregate_daily(raw: RawFlowSeries, max_missing_fraction: float = 0.20) -> DailySeries:
    """Daily means of minute readings, dropping days with too many gaps.

    A day keeps its mean when the share of its 1440 nominal minute slots
    without a reading is at most `max_missing_fraction`; otherwise the day
    is marked missing. Absent timestamps and NaN readings both count as
    missing slots.
    """
    if not 0.0 <= max_missing_fraction <= 1.0:
        raise ValueError("max_missing_fraction must lie in [0, 1]")
    if raw.timestamps.size == 0:
        return DailySeries(raw.gauge_id, np.array([], dtype="datetime64[D]"), np.array([]))
    days = raw.timestamps.astype("datetime64[D]")
    first, last = days[0], days[-1]
    n_days = int((last - first).astype(int)) + 1
    slot = (days - first).astype(int)
    present = ~np.isnan(raw.values)
    counts = np.bincount(slot[present], minlength=n_days)
    sums = np.bincount(slot[present], weights=raw.values[present], minlength=n_days)
    missing_fraction = 1.0 - counts / MINUTES_PER_DAY
    keep = (counts > 0) & (missing_fraction <= max_missing_fraction + 1e-12)
    means = np.full(n_days, np.nan)
    means[keep] = sums[keep] / counts[keep]
    dates = first + np.arange(n_days).astype("timedelta64[D]")
    return DailySeries(raw.gauge_id, dates, means)


def exclude_ranges(series: DailySeries, ranges: Iterable[tuple[str, str]]) -> DailySeries:
    """Mark the given inclusive date ranges as missing."""
    vals = series.values.copy()
    for start, end in ranges:
        lo, hi = np.datetime64(start, "D"), np.datetime64(end, "D")
        vals[(series.dates >= lo) & (series.dates <= hi)] = np.nan
    return DailySeries(series.gauge_id, series.dates, vals)


def remove_outliers(series: DailySeries, k: float = 3.0) -> tuple[DailySeries, OutlierReport]:
    """Single-pass residual-IQR outlier removal around the super smoother.

    Residuals of present values from their super-smooth are compared with
    ``[Q1 - k*IQR, Q3 + k*IQR]``; points strictly outside are set missing.
    Series with fewer than 10 present values are returned unchanged.
    """
    present = ~series.missing
    if present.sum() < MIN_POINTS:
        return series, OutlierReport(series.gauge_id, (), float("nan"), float("nan"))
    x = (series.dates[present] - series.dates[0]).astype(float)
    y = series.values[present]
    resid = y - super_smooth(y, x).values
    q1, q3 = np.quantile(resid, [0.25, 0.75])
    # floor the spread at rounding level so a noise-free series flags nothing
    iqr = max(q3 - q1, 1e-9 * max(1.0, float(np.max(np.abs(y)))))
    lower, upper = q1 - k * iqr, q3 + k * iqr
    bad = (resid < lower) | (resid > upper)
    vals = series.values.copy()
    pos = np.flatnonzero(present)[bad]
    vals[pos] = np.nan
    flagged = tuple(series.dates[pos])
    if flagged:
        logger.info("%s: %d outliers removed", series.gauge_id, len(flagged))
    return (DailySeries(series.gauge_id, series.dates, vals),
            OutlierReport(series.gauge_id, flagged, float(lower), float(upper)))


def build_supervised(flow: DailySeries, meteo: MeteoTable) -> SupervisedSet:
    """Lagged predictors for one-day-ahead prediction of daily mean flow.

    A target day t yields a sample when the flow at t and at t-1..t-7 and
    every meteorological column at t-1..t-3 are available. Feature order
    follows `FEATURE_NAMES`: seven flow lags, then each meteorological
    variable at lags 1, 2, 3.
    """
    if flow.dates.size == 0:
        raise EmptySetError(f"{flow.gauge_id}: flow series is empty")
    start = min(flow.dates[0], meteo.dates[0]) if meteo.dates.size else flow.dates[0]
    end = max(flow.dates[-1], meteo.dates[-1]) if meteo.dates.size else flow.dates[-1]
    n = int((end - start).astype(int)) + 1

    f = np.full(n, np.nan)
    f[(flow.dates - start).astype(int)] = flow.values
    m = np.full((n, len(METEO_COLUMNS)), np.nan)
    if meteo.dates.size:
        m[(meteo.dates - start).astype(int)] = meteo.values

    def lag(arr, k):
        out = np.full_like(arr, np.nan)
        out[k:] = arr[:-k]
        return out

    flow_lags = np.column_stack([lag(f, k) for k in range(1, FLOW_LAGS + 1)])
    meteo_lags = np.concatenate(
        [np.column_stack([lag(m[:, c], k) for k in range(1, METEO_LAGS + 1)])
         for c in range(len(METEO_COLUMNS))],
        axis=1,
    )
    X = np.concatenate([flow_lags, meteo_lags], axis=1)
    flow_ok = ~np.isnan(f) & ~np.isnan(flow_lags).any(axis=1)
    meteo_ok = ~np.isnan(meteo_lags).any(axis=1)
    ok = flow_ok & meteo_ok
    if not ok.any():
        if not flow_ok.any():
            reason = "no target day has its flow and all 7 preceding daily flows present"
        elif not meteo_ok.any():
            reason = "meteorological records do not cover 3 days before any target"
        else:
            reason = "no day with complete flow lags also has complete meteorological lags"
        raise EmptySetError(f"{flow.gauge_id}: {reason}")
    dates = start + np.flatnonzero(ok).astype("timedelta64[D]")
    return SupervisedSet(flow.gauge_id, dates, X[ok], f[ok])


def chronological_split(data: SupervisedSet, train_fraction: float = 0.5
                        ) -> tuple[SupervisedSet, SupervisedSet]:
    """First ``floor(n * train_fraction)`` samples train, the rest test."""
    if not 0.0 < train_fraction < 1.0:
        raise SplitError("train_fraction must lie in (0, 1)")
    n = len(data)
    n_train = int(np.floor(n * train_fraction))
    if n_train == 0 or n_train == n:
        raise SplitError(f"{data.gauge_id}: split of {n} samples leaves one side empty")
    return data.subset(slice(0, n_train)), data.subset(slice(n_train, n))


def prepare_gauge(raw: RawFlowSeries, meteo: MeteoTable, max_missing_fraction: float = 0.20,
                  exclusions: Sequence[tuple[str, str]] = ()
                  ) -> tuple[SupervisedSet, DailySeries, OutlierReport]:
    daily = aggregate_daily(raw, max_missing_fraction)
    daily = exclude_ranges(daily, exclusions)
    cleaned, report = remove_outliers(daily)
    return build_supervised(cleaned, meteo), cleaned, report
