from __future__ import annotations

import json

import numpy as np
import pytest
from scipy.stats import norm

from waterqr.io import read_flow_csv, read_meteo_csv
from waterqr.prep import aggregate_daily
from waterqr.quantile import DEFAULT_LEVELS, ProbabilisticForecast
from waterqr.synth import (ConfigError, SynthScenario, generate, oracle_score, quantize,
                           write_scenario)


def test_stationary_gaussian_oracle():
    s = SynthScenario(n_days=50, level=40, sigma=3, seed=2)
    _, _, oracle = generate(s)
    for a in DEFAULT_LEVELS:
        np.testing.assert_allclose(oracle(oracle.dates[1:], a), 40 + 3 * norm.ppf(a), rtol=1e-12)


def test_median_equals_conditional_mean():
    s = SynthScenario(n_days=100, phi=0.6, trend=0.1, weekly_amplitude=4, seed=1)
    _, _, oracle = generate(s)
    np.testing.assert_array_equal(oracle(oracle.dates[1:], 0.5), oracle.center[1:])


def test_generator_coverage_monte_carlo():
    s = SynthScenario(n_days=100_000, phi=0.5, sigma=2, noise="covariate", noise_slope=3,
                      weekly_amplitude=5, level=80, seed=9)
    series, _, oracle = generate(s)
    lo = oracle(oracle.dates[1:], 0.025)
    hi = oracle(oracle.dates[1:], 0.975)
    y = series.values[1:]
    assert abs(np.mean((y >= lo) & (y <= hi)) - 0.95) <= 0.003


def test_oracle_monotone_in_level():
    s = SynthScenario(n_days=60, innovation="lognormal", lognormal_shape=0.8, seed=3)
    _, _, oracle = generate(s)
    grid = np.linspace(0.01, 0.99, 50)
    q = np.column_stack([oracle(oracle.dates[1:], a) for a in grid])
    assert np.all(np.diff(q, axis=1) > 0)


def test_determinism_and_seed_change():
    a, _, _ = generate(SynthScenario(n_days=30, seed=5))
    b, _, _ = generate(SynthScenario(n_days=30, seed=5))
    c, _, _ = generate(SynthScenario(n_days=30, seed=6))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_oracle_regret():
    s = SynthScenario(n_days=2000, phi=0.8, noise="covariate", noise_slope=6, seed=4)
    series, _, oracle = generate(s)
    dates = series.dates[1:]
    obs = dict(zip(dates.astype(object), series.values[1:]))
    truth = oracle.forecast(dates, DEFAULT_LEVELS)
    for a in DEFAULT_LEVELS:
        assert oracle_score(truth, oracle, obs, a)["regret"] == 0
    const = ProbabilisticForecast(tuple(dates.astype(object)), DEFAULT_LEVELS,
                                  np.tile(np.quantile(series.values, DEFAULT_LEVELS), (dates.size, 1)))
    assert all(oracle_score(const, oracle, obs, a)["regret"] > 0 for a in DEFAULT_LEVELS)


def test_invalid_scenarios():
    for bad in ({"phi": 1.0}, {"sigma": 0}, {"noise": "cubic"}, {"gauges": 0},
                {"start_date": "yesterday"}):
        with pytest.raises(ConfigError):
            SynthScenario(**bad)
    with pytest.raises(ConfigError, match="unknown"):
        SynthScenario.from_mapping({"n_dayz": 3})
    with pytest.raises(ConfigError, match="negative"):
        generate(SynthScenario(level=1, sigma=5, n_days=200))


def test_written_files_round_trip(tmp_path):
    s = SynthScenario(n_days=40, gauges=2, weekly_amplitude=3, seed=8)
    write_scenario(s, tmp_path / "a")
    write_scenario(s, tmp_path / "b")
    for name in ("flow/gauge_001.csv", "flow/gauge_002.csv", "meteo.csv", "oracle.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for g in range(2):
        series, meteo, _ = generate(s, g)
        back = aggregate_daily(read_flow_csv(tmp_path / "a" / "flow" / f"gauge_00{g + 1}.csv"))
        np.testing.assert_array_equal(back.values, quantize(series.values))
        np.testing.assert_array_equal(back.dates, series.dates)
    np.testing.assert_array_equal(read_meteo_csv(tmp_path / "a" / "meteo.csv").values, meteo.values)
    payload = json.loads((tmp_path / "a" / "oracle.json").read_text())
    assert set(payload["gauges"]) == {"gauge_001", "gauge_002"}
    write_scenario(SynthScenario(n_days=40, seed=9), tmp_path / "c")
    header = (tmp_path / "c" / "flow" / "gauge_001.csv").read_text().splitlines()[0]
    assert header == "timestamp,value"
    assert ((tmp_path / "c" / "flow" / "gauge_001.csv").read_bytes()
            != (tmp_path / "a" / "flow" / "gauge_001.csv").read_bytes())


def test_trees_cannot_extrapolate_trend():
    from waterqr.forest import ForestParams, fit_quantile_forest
    from waterqr.linear import fit_linear_qr
    from waterqr.prep import build_supervised, chronological_split
    from waterqr.quantile import pinball_loss

    s = SynthScenario(n_days=600, trend=0.1, sigma=1.5, seed=2)
    series, meteo, _ = generate(s)
    train, test = chronological_split(build_supervised(series, meteo))
    forest = fit_quantile_forest(train.X, train.y, ForestParams(n_trees=50))
    fq = forest.predict_quantiles(test.X, [0.5])[:, 0]
    lq = fit_linear_qr(train.X, train.y, 0.5).predict(test.X)
    assert np.mean(pinball_loss(fq, test.y, 0.5)) > np.mean(pinball_loss(lq, test.y, 0.5))
