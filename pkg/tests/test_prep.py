from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waterqr.io import read_flow_csv, read_meteo_csv, write_flow_csv, write_meteo_csv
from waterqr.prep import (FEATURE_NAMES, METEO_COLUMNS, DailySeries, EmptySetError, MeteoTable,
                          RawFlowSeries, SplitError, SupervisedSet, aggregate_daily,
                          build_supervised, chronological_split, exclude_ranges,
                          remove_outliers)
from waterqr.smoother import running_line, super_smooth, window_size

DAY0 = np.datetime64("2020-01-01", "D")


def minutes_of(day_offset, n_present, value=1.0):
    start = (DAY0 + day_offset).astype("datetime64[m]")
    ts = start + np.arange(n_present).astype("timedelta64[m]")
    return ts, np.full(n_present, value)


def daily(values, start=DAY0, gauge="g"):
    values = np.asarray(values, dtype=float)
    return DailySeries(gauge, start + np.arange(values.size).astype("timedelta64[D]"), values)


def meteo(n, start=DAY0, seed=0):
    r = np.random.default_rng(seed)
    return MeteoTable(start + np.arange(n).astype("timedelta64[D]"),
                      r.normal(size=(n, len(METEO_COLUMNS))))


# aggregation

@pytest.mark.parametrize("present,kept", [(1240, True), (1140, False), (1440 - 288, True),
                                          (1440 - 289, False)])
def test_missing_threshold(present, kept):
    r = np.random.default_rng(present)
    vals = r.uniform(1, 5, present)
    ts, _ = minutes_of(0, present)
    out = aggregate_daily(RawFlowSeries("g", ts, vals))
    if kept:
        assert out.values[0] == pytest.approx(vals.mean(), rel=1e-14)
    else:
        assert np.isnan(out.values[0])


def test_nan_readings_count_as_missing():
    ts, vals = minutes_of(0, 1440)
    vals[:300] = np.nan
    assert np.isnan(aggregate_daily(RawFlowSeries("g", ts, vals)).values[0])


def test_gap_days_are_missing():
    t1, v1 = minutes_of(0, 1440, 2.0)
    t2, v2 = minutes_of(2, 1440, 4.0)
    out = aggregate_daily(RawFlowSeries("g", np.concatenate([t1, t2]), np.concatenate([v1, v2])))
    np.testing.assert_array_equal(out.values, [2.0, np.nan, 4.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 100))
def test_aggregate_permutation_and_scale(seed, c):
    r = np.random.default_rng(seed)
    ts, _ = minutes_of(0, 1440)
    vals = r.uniform(0, 10, 1440)
    base = aggregate_daily(RawFlowSeries("g", ts, vals)).values[0]
    perm = aggregate_daily(RawFlowSeries("g", ts, r.permutation(vals))).values[0]
    scaled = aggregate_daily(RawFlowSeries("g", ts, c * vals)).values[0]
    assert perm == pytest.approx(base, rel=1e-12)
    assert scaled == pytest.approx(c * base, rel=1e-12)


def test_exclude_ranges():
    out = exclude_ranges(daily(np.arange(5.0)), [("2020-01-02", "2020-01-03")])
    np.testing.assert_array_equal(np.isnan(out.values), [False, True, True, False, False])


# smoother

def test_running_line_matches_least_squares(rng):
    x = np.sort(rng.uniform(0, 10, 60))
    y = np.sin(x) + rng.normal(0, 0.2, 60)
    span = 0.2
    j = window_size(span, x.size)
    fit = running_line(x, y, span)
    cv = running_line(x, y, span, cv=True)
    for i in range(x.size):
        lo = min(max(i - j // 2, 0), x.size - j)
        w = np.arange(lo, lo + j)
        b = np.polyfit(x[w], y[w], 1)
        assert fit[i] == pytest.approx(np.polyval(b, x[i]), abs=1e-9)
        w = w[w != i]
        b = np.polyfit(x[w], y[w], 1)
        assert cv[i] == pytest.approx(np.polyval(b, x[i]), abs=1e-9)


def test_smooth_constant_and_line():
    np.testing.assert_allclose(super_smooth(np.full(50, 3.25)).values, 3.25, atol=1e-12)
    t = np.arange(365, dtype=float)
    np.testing.assert_allclose(super_smooth(2 * t + 1).values, 2 * t + 1, atol=1e-9)


def test_smooth_short_series_passthrough():
    res = super_smooth(np.arange(9.0))
    assert res.passthrough
    np.testing.assert_array_equal(res.values, np.arange(9.0))


def test_smooth_resists_single_spike(rng):
    t = np.arange(365, dtype=float)
    noise = rng.normal(0, 1.0, t.size)
    line = 0.05 * t + 20
    y = line + noise
    y[180] += 10.0
    resid = y - line
    iqr = np.subtract(*np.percentile(np.delete(resid, 180), [75, 25]))
    assert abs(super_smooth(y).values[180] - line[180]) <= iqr


# outliers

def test_no_outliers_on_pure_line():
    s = daily(0.1 * np.arange(200) + 5)
    out, rep = remove_outliers(s)
    assert rep.flagged == ()
    np.testing.assert_array_equal(out.values, s.values)


def test_single_spike_flagged(rng):
    t = np.arange(365)
    y = 30 + 0.01 * t + 2 * np.sin(2 * np.pi * t / 7) + rng.normal(0, 0.5, t.size)
    y[200] += 40
    out, rep = remove_outliers(daily(y))
    assert rep.flagged == (DAY0 + 200,)
    assert np.isnan(out.values[200]) and out.n_present == 364


def test_spike_flagged_against_hand_quartiles(rng):
    # oracle: recompute residual quartiles from the smoother by hand
    t = np.arange(365)
    y = 30 + rng.normal(0, 1.0, t.size)
    s = super_smooth(y, t.astype(float)).values
    q1, q3 = np.percentile(y - s, [25, 75])
    y[100] += 10 * (q3 - q1) + 5
    _, rep = remove_outliers(daily(y))
    assert DAY0 + 100 in rep.flagged


def test_nine_points_unchanged():
    s = daily([1, 2, 3, 4, 100, 6, 7, 8, 9])
    out, rep = remove_outliers(s)
    assert rep.flagged == ()
    np.testing.assert_array_equal(out.values, s.values)


def test_outliers_idempotent_on_spike_free(rng):
    y = 30 + 0.02 * np.arange(300) + rng.normal(0, 1, 300)
    once, _ = remove_outliers(daily(y))
    twice, rep = remove_outliers(once)
    np.testing.assert_array_equal(once.values, twice.values)


# supervised set

def test_feature_names():
    assert len(FEATURE_NAMES) == 52
    assert FEATURE_NAMES[:7] == tuple(f"F_avg_t-{k}" for k in range(1, 8))
    assert FEATURE_NAMES[7:10] == ("T_high_t-1", "T_high_t-2", "T_high_t-3")
    assert FEATURE_NAMES[-1] == "R_total_t-3"


def test_hundred_days_give_93_samples():
    f = daily(np.arange(1.0, 101.0))
    data = build_supervised(f, meteo(100))
    assert data.X.shape == (93, 52)
    assert data.dates[0] == DAY0 + 7 and data.dates[-1] == DAY0 + 99
    # lag k of the first target is the value k days earlier
    np.testing.assert_array_equal(data.X[0, :7], [7, 6, 5, 4, 3, 2, 1])
    assert data.y[0] == 8
    m = meteo(100)
    np.testing.assert_array_equal(data.X[0, 7:10], m.values[[6, 5, 4], 0])


def test_missing_day_removes_its_window():
    vals = np.arange(1.0, 101.0)
    vals[9] = np.nan
    data = build_supervised(daily(vals), meteo(100))
    targets = ((data.dates - DAY0).astype(int) + 1)
    assert not np.any((targets >= 10) & (targets <= 17))
    assert len(data) == 93 - 8


def test_short_meteo_restricts_to_overlap():
    data = build_supervised(daily(np.arange(1.0, 101.0)), meteo(50))
    assert data.dates[-1] == DAY0 + 50
    assert data.dates[0] == DAY0 + 7


def test_no_samples_raises():
    with pytest.raises(EmptySetError, match="7 preceding"):
        build_supervised(daily(np.arange(1.0, 6.0)), meteo(10))


def test_chronological_split():
    def sset(n):
        return SupervisedSet("g", DAY0 + np.arange(n).astype("timedelta64[D]"),
                             np.zeros((n, 52)), np.arange(n, dtype=float))
    tr, te = chronological_split(sset(100))
    assert (len(tr), len(te)) == (50, 50)
    tr, te = chronological_split(sset(101))
    assert (len(tr), len(te)) == (50, 51)
    assert tr.dates[-1] < te.dates[0]
    np.testing.assert_array_equal(np.concatenate([tr.y, te.y]), np.arange(101))
    with pytest.raises(SplitError):
        chronological_split(sset(1))


# io

def test_flow_and_meteo_round_trip(tmp_path):
    vals = np.array([1.5, np.nan, 2.0 ** -16 * 12345])
    s = daily(vals)
    write_flow_csv(s, tmp_path / "g.csv")
    back = aggregate_daily(read_flow_csv(tmp_path / "g.csv"))
    np.testing.assert_array_equal(back.values, vals)
    assert back.gauge_id == "g"
    m = meteo(5)
    write_meteo_csv(m, tmp_path / "m.csv")
    mb = read_meteo_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(mb.values, m.values)
    np.testing.assert_array_equal(mb.dates, m.dates)


def test_bad_header(tmp_path):
    from waterqr.io import InputFormatError
    (tmp_path / "g.csv").write_text("time,flow\n2020-01-01T00:00,1\n")
    with pytest.raises(InputFormatError, match="expected header"):
        read_flow_csv(tmp_path / "g.csv")
