"""CSV ingestion and emission for flow and meteorological records."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .prep import METEO_COLUMNS, DailySeries, MeteoTable, RawFlowSeries

FLOW_HEADER = ("timestamp", "value")
METEO_HEADER = ("date",) + METEO_COLUMNS


class InputFormatError(ValueError):
    pass


def _check_header(df: pd.DataFrame, expected, path) -> None:
    if tuple(df.columns) != tuple(expected):
        raise InputFormatError(f"{path}: expected header {','.join(expected)}, "
                               f"got {','.join(map(str, df.columns))}")


def read_flow_csv(path, gauge_id: str | None = None) -> RawFlowSeries:
    """Read a ``timestamp,value`` file; an empty value field is a missing reading."""
    path = Path(path)
    df = pd.read_csv(path, dtype={"timestamp": str}, keep_default_na=False,
                     float_precision="round_trip",
                     na_values={"value": [""]})
    _check_header(df, FLOW_HEADER, path)
    try:
        ts = pd.to_datetime(df["timestamp"], format="ISO8601").to_numpy(dtype="datetime64[m]")
    except (ValueError, TypeError) as exc:
        raise InputFormatError(f"{path}: bad timestamp ({exc})") from exc
    vals = pd.to_numeric(df["value"], errors="raise").to_numpy(dtype=float)
    try:
        return RawFlowSeries(gauge_id or path.stem, ts, vals)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


def read_meteo_csv(path) -> MeteoTable:
    path = Path(path)
    df = pd.read_csv(path, dtype={"date": str}, float_precision="round_trip")
    _check_header(df, METEO_HEADER, path)
    dates = pd.to_datetime(df["date"], format="ISO8601").to_numpy(dtype="datetime64[D]")
    vals = df[list(METEO_COLUMNS)].to_numpy(dtype=float)
    try:
        return MeteoTable(dates, vals)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


def write_meteo_csv(meteo: MeteoTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METEO_HEADER) + "\n")
        for d, row in zip(meteo.dates, meteo.values):
            fh.write(str(d) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def write_flow_csv(daily: DailySeries, path) -> None:
    """Expand a daily series to minute readings, each day held at its mean.

    Missing days are written as 1440 empty readings so the file still
    covers the whole span.
    """
    minutes = np.arange(1440).astype("timedelta64[m]")
    stamps = [np.datetime_as_string(d.astype("datetime64[m]") + minutes, unit="m")
              for d in daily.dates]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("timestamp,value\n")
        for day_stamps, v in zip(stamps, daily.values):
            text = "" if np.isnan(v) else repr(float(v))
            fh.write("".join(f"{s},{text}\n" for s in day_stamps))
