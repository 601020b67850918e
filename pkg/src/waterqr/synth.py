"""Synthetic demand-like series with known conditional quantiles.

The daily flow follows

    y_t = d_t + phi * (y_{t-1} - d_{t-1}) + s_t * e_t

with a deterministic part ``d_t`` (level, linear trend, weekly and annual
sines and an optional step driven by the previous day's high temperature),
a noise scale ``s_t`` that is either constant or linear in the previous
day's average humidity, and unit-variance innovations ``e_t``. Given
``y_{t-1}`` and the meteorological records up to ``t-1``, the true
``a``-quantile of ``y_t`` is ``d_t + phi * (y_{t-1} - d_{t-1}) + s_t * q(a)``
with ``q`` the innovation quantile function.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .prep import METEO_COLUMNS, DailySeries, MeteoTable
from .quantile import ProbabilisticForecast, average_quantile_score, check_level


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthScenario:
    n_days: int = 730
    start_date: str = "2015-01-01"
    level: float = 50.0
    trend: float = 0.0
    weekly_amplitude: float = 0.0
    annual_amplitude: float = 0.0
    phi: float = 0.0
    sigma: float = 2.0
    noise: str = "constant"
    noise_slope: float = 0.0
    innovation: str = "gaussian"
    lognormal_shape: float = 0.5
    step_size: float = 0.0
    step_threshold: float = 22.0
    temp_mean: float = 18.0
    temp_amplitude: float = 8.0
    temp_noise: float = 2.0
    gauges: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_days < 1:
            raise ConfigError("n_days must be positive")
        if not 0.0 <= self.phi < 1.0:
            raise ConfigError("phi must lie in [0, 1)")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.noise not in ("constant", "covariate"):
            raise ConfigError(f"noise must be 'constant' or 'covariate', got {self.noise!r}")
        if self.noise_slope < 0:
            raise ConfigError("noise_slope must be non-negative")
        if self.innovation not in ("gaussian", "lognormal"):
            raise ConfigError(f"innovation must be 'gaussian' or 'lognormal', got {self.innovation!r}")
        if self.lognormal_shape <= 0:
            raise ConfigError("lognormal_shape must be positive")
        if self.gauges < 1:
            raise ConfigError("gauges must be at least 1")
        try:
            np.datetime64(self.start_date, "D")
        except ValueError as exc:
            raise ConfigError(f"bad start_date {self.start_date!r}") from exc

    @classmethod
    def from_mapping(cls, data: dict) -> "SynthScenario":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class OracleQuantiles:
    """True conditional quantiles of a generated series.

    ``center`` and ``scale`` are NaN on the first day, which has no
    predecessor to condition on.
    """

    dates: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    innovation: str = "gaussian"
    lognormal_shape: float = 0.5

    def innovation_quantile(self, a: float) -> float:
        z = norm.ppf(check_level(a))
        if self.innovation == "gaussian":
            return float(z)
        s = self.lognormal_shape
        mean = np.exp(s * s / 2.0)
        sd = np.sqrt((np.exp(s * s) - 1.0) * np.exp(s * s))
        return float((np.exp(s * z) - mean) / sd)

    def __call__(self, dates, a: float) -> np.ndarray:
        idx = ((np.asarray(dates, dtype="datetime64[D]") - self.dates[0])
               .astype(np.int64))
        return self.center[idx] + self.scale[idx] * self.innovation_quantile(a)

    def forecast(self, dates, levels) -> ProbabilisticForecast:
        dates = np.asarray(dates, dtype="datetime64[D]")
        values = np.column_stack([self(dates, a) for a in levels])
        return ProbabilisticForecast(tuple(dates.astype(object)), tuple(levels), values)


def generate_meteo(scenario: SynthScenario) -> MeteoTable:
    """Smooth seasonal meteorological records shared by every gauge."""
    rng = np.random.default_rng([scenario.seed, 0, 0])
    n = scenario.n_days
    t = np.arange(n)
    season = np.sin(2 * np.pi * (t - 110) / 365.25)
    ar = np.zeros(n)
    shocks = rng.normal(0.0, scenario.temp_noise, n)
    for i in range(1, n):
        ar[i] = 0.6 * ar[i - 1] + shocks[i]
    t_avg = scenario.temp_mean + scenario.temp_amplitude * season + ar
    t_high = t_avg + 4.0 + np.abs(rng.normal(0.0, 1.5, n))
    t_low = t_avg - 4.0 - np.abs(rng.normal(0.0, 1.5, n))
    d_avg = t_avg - 6.0 + rng.normal(0.0, 1.5, n)
    d_high = d_avg + 2.0 + np.abs(rng.normal(0.0, 1.0, n))
    d_low = d_avg - 2.0 - np.abs(rng.normal(0.0, 1.0, n))
    h_avg = np.clip(68.0 - 1.2 * (t_avg - scenario.temp_mean) + rng.normal(0.0, 8.0, n), 10.0, 95.0)
    h_high = np.minimum(h_avg + 10.0 + np.abs(rng.normal(0.0, 4.0, n)), 100.0)
    h_low = np.maximum(h_avg - 10.0 - np.abs(rng.normal(0.0, 4.0, n)), 1.0)
    s_avg = rng.gamma(4.0, 3.0, n)
    s_high = s_avg * (1.6 + np.abs(rng.normal(0.0, 0.3, n)))
    s_low = s_avg * rng.uniform(0.0, 0.5, n)
    p_high = 1016.0 - 3.0 * season + rng.normal(0.0, 4.0, n)
    p_low = p_high - 4.0 - np.abs(rng.normal(0.0, 2.0, n))
    r_total = np.where(rng.uniform(size=n) < 0.25 * (1.0 - 0.6 * season), rng.exponential(6.0, n), 0.0)
    columns = {
        "t_high": t_high, "t_avg": t_avg, "t_low": t_low,
        "d_high": d_high, "d_avg": d_avg, "d_low": d_low,
        "h_high": h_high, "h_avg": h_avg, "h_low": h_low,
        "s_high": s_high, "s_avg": s_avg, "s_low": s_low,
        "p_high": p_high, "p_low": p_low, "r_total": r_total,
    }
    dates = np.datetime64(scenario.start_date, "D") + t.astype("timedelta64[D]")
    return MeteoTable(dates, np.column_stack([columns[c] for c in METEO_COLUMNS]))


def _innovations(scenario: SynthScenario, rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal(n)
    if scenario.innovation == "gaussian":
        return z
    s = scenario.lognormal_shape
    return (np.exp(s * z) - np.exp(s * s / 2.0)) / np.sqrt((np.exp(s * s) - 1.0) * np.exp(s * s))


def generate(scenario: SynthScenario, gauge: int = 0,
             meteo: MeteoTable | None = None) -> tuple[DailySeries, MeteoTable, OracleQuantiles]:
    """Simulate one gauge; the meteorological table depends only on the seed."""
    if meteo is None:
        meteo = generate_meteo(scenario)
    n = scenario.n_days
    t = np.arange(n, dtype=float)
    col = {c: meteo.values[:, i] for i, c in enumerate(METEO_COLUMNS)}

    def lag1(v):
        out = np.empty_like(v)
        out[0] = v[0]
        out[1:] = v[:-1]
        return out

    det = (scenario.level + scenario.trend * t
           + scenario.weekly_amplitude * np.sin(2 * np.pi * t / 7.0)
           + scenario.annual_amplitude * np.sin(2 * np.pi * t / 365.25)
           + scenario.step_size * (lag1(col["t_high"]) > scenario.step_threshold))
    scale = np.full(n, float(scenario.sigma))
    if scenario.noise == "covariate":
        scale = scale + scenario.noise_slope * lag1(col["h_avg"]) / 100.0

    rng = np.random.default_rng([scenario.seed, 1, gauge])
    eps = _innovations(scenario, rng, n)
    y = np.empty(n)
    center = np.full(n, np.nan)
    y[0] = det[0] + scale[0] * eps[0] / np.sqrt(1.0 - scenario.phi ** 2)
    for i in range(1, n):
        center[i] = det[i] + scenario.phi * (y[i - 1] - det[i - 1])
        y[i] = center[i] + scale[i] * eps[i]
    if np.any(y < 0):
        raise ConfigError("scenario produced negative flows; raise `level` or lower `sigma`")
    scale_out = scale.copy()
    scale_out[0] = np.nan
    series = DailySeries(f"gauge_{gauge + 1:03d}", meteo.dates, y)
    oracle = OracleQuantiles(meteo.dates, center, scale_out, scenario.innovation,
                             scenario.lognormal_shape)
    return series, meteo, oracle


def oracle_score(forecast: ProbabilisticForecast, oracle: OracleQuantiles,
                 observed: dict, a: float) -> dict:
    """Excess mean pinball loss of a forecast over the true quantile function.

    Both forecasts are scored by `average_quantile_score` on the same dates.
    Returns a dict with ``model``, ``oracle``, ``regret`` and ``relative``
    (regret divided by the oracle loss).
    """
    truth = oracle.forecast(np.array(forecast.dates, dtype="datetime64[D]"), forecast.levels)
    if truth.dates != forecast.dates:
        raise ValueError("oracle and forecast dates are misaligned")
    model = average_quantile_score(forecast, observed, a).average_score
    best = average_quantile_score(truth, observed, a).average_score
    regret = model - best
    return {"model": model, "oracle": best, "regret": regret,
            "relative": regret / best if best > 0 else float("inf")}


FLOW_QUANTUM = 2.0 ** -16


def quantize(values: np.ndarray) -> np.ndarray:
    """Round to a dyadic grid so minute-level expansion averages back exactly."""
    return np.round(np.asarray(values, dtype=float) / FLOW_QUANTUM) * FLOW_QUANTUM


def write_scenario(scenario: SynthScenario, out_dir) -> list[Path]:
    """Write flow files, the meteorological file and oracle parameters.

    Layout: ``flow/<gauge>.csv`` (minute readings), ``meteo.csv`` and
    ``oracle.json`` (scenario fields plus per-gauge oracle centres and scales).
    """
    from .io import write_flow_csv, write_meteo_csv

    out = Path(out_dir)
    (out / "flow").mkdir(parents=True, exist_ok=True)
    meteo = generate_meteo(scenario)
    written = []
    oracle_payload = {"scenario": dataclasses.asdict(scenario), "gauges": {}}
    for g in range(scenario.gauges):
        series, _, oracle = generate(scenario, g, meteo)
        series = DailySeries(series.gauge_id, series.dates, quantize(series.values))
        path = out / "flow" / f"{series.gauge_id}.csv"
        write_flow_csv(series, path)
        written.append(path)
        oracle_payload["gauges"][series.gauge_id] = {
            "center": [None if np.isnan(v) else float(v) for v in oracle.center],
            "scale": [None if np.isnan(v) else float(v) for v in oracle.scale],
        }
    write_meteo_csv(meteo, out / "meteo.csv")
    written.append(out / "meteo.csv")
    with open(out / "oracle.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(oracle_payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    written.append(out / "oracle.json")
    return written
