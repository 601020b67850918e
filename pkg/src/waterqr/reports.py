"""Byte-stable CSV/JSON report writing and plot-ready long tables.

Floats are written with 6 significant digits, LF newlines and no locale
dependence, so identical inputs give identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .evaluate import EvaluationReport, importance_order

TARGET_NAME = "F_avg_t"


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        out = format(v, ".6g")
        return "0" if out == "-0" else out
    return str(value)


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def _rounded(value):
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if math.isnan(v) else float(format(v, ".6g"))
    return value


def write_reports(rep: EvaluationReport, out_dir, spearman: dict | None = None,
                  forecasts: dict | None = None) -> list[Path]:
    """Write every comparison table plus ``summary.json`` into `out_dir`.

    Parameters
    ----------
    spearman : dict, optional
        gauge -> [53 x 53] matrix over the target and the predictors.
    forecasts : dict, optional
        gauge -> (dates, observed, {algorithm: [date x level] values}).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    lv = rep.levels
    score_rows = [(g, a, l, s) for (g, a, l), s in rep.scores.items()]
    score_rows.sort(key=lambda r: (r[0], rep.algorithms.index(r[1]), r[2]))
    written.append(write_table(out / "scores.csv", ["gauge", "algorithm", "level", "score"],
                               score_rows))
    order = {a: i for i, a in enumerate(rep.algorithms)}

    def keyed(d):
        return sorted(d.items(), key=lambda kv: (kv[0][0], order[kv[0][1]], kv[0][2]))

    written.append(write_table(out / "improvements.csv",
                               ["gauge", "algorithm", "level", "improvement_pct"],
                               [(*k, v) for k, v in keyed(rep.improvements)]))
    written.append(write_table(out / "improvements_summary.csv",
                               ["algorithm", "level", "mean", "median"],
                               [(a, l, *rep.improvement_summary[(a, l)])
                                for a in rep.algorithms for l in lv
                                if (a, l) in rep.improvement_summary]))
    written.append(write_table(out / "improvements_overall.csv",
                               ["algorithm", "ordering", "mean", "median"],
                               [(a, o, *rep.improvement_overall[(a, o)])
                                for a in rep.algorithms for o in ("levels_first", "gauges_first")
                                if (a, o) in rep.improvement_overall]))
    written.append(write_table(out / "ranks.csv", ["gauge", "algorithm", "level", "rank"],
                               [(*k, v) for k, v in keyed(rep.ranks)]))
    written.append(write_table(out / "ranks_summary.csv", ["algorithm", "level", "mean_rank"],
                               [(a, l, rep.mean_rank[(a, l)]) for a in rep.algorithms for l in lv
                                if (a, l) in rep.mean_rank]))
    if rep.importance:
        written.extend(write_importance(rep, out))
    for g, mat in sorted((spearman or {}).items()):
        names = [TARGET_NAME, *rep.feature_names]
        written.append(write_table(out / f"spearman_{g}.csv", ["variable", *names],
                                   [(n, *row) for n, row in zip(names, mat)]))
    for g, (dates, observed, values) in sorted((forecasts or {}).items()):
        rows = []
        for alg in rep.algorithms:
            if alg not in values:
                continue
            for i, d in enumerate(dates):
                rows.append((d, alg, observed[i], *values[alg][i]))
        written.append(write_table(out / f"forecasts_{g}.csv",
                                   ["date", "algorithm", "observed", *[f"q{fmt(l)}" for l in lv]],
                                   rows))

    summary = {
        "gauges": rep.gauges, "algorithms": rep.algorithms, "levels": lv,
        "feature_names": rep.feature_names,
        "scores": [dict(zip(("gauge", "algorithm", "level", "score"), map(_rounded, r)))
                   for r in score_rows],
        "improvements": [{"gauge": k[0], "algorithm": k[1], "level": k[2],
                          "improvement_pct": _rounded(v)} for k, v in keyed(rep.improvements)],
        "improvements_summary": [{"algorithm": a, "level": l, "mean": _rounded(m),
                                  "median": _rounded(md)}
                                 for (a, l), (m, md) in rep.improvement_summary.items()],
        "improvements_overall": [{"algorithm": a, "ordering": o, "mean": _rounded(m),
                                  "median": _rounded(md)}
                                 for (a, o), (m, md) in rep.improvement_overall.items()],
        "ranks": [{"gauge": k[0], "algorithm": k[1], "level": k[2], "rank": _rounded(v)}
                  for k, v in keyed(rep.ranks)],
        "ranks_summary": [{"algorithm": a, "level": l, "mean_rank": _rounded(v)}
                          for (a, l), v in rep.mean_rank.items()],
        "importance_mean_rank": {n: _rounded(v) for n, v in rep.importance_mean_rank.items()},
    }
    written.append(write_json(out / "summary.json", summary))
    return written


def write_importance(rep: EvaluationReport, out) -> list[Path]:
    out = Path(out)
    rows = []
    for g in sorted(rep.importance):
        for name, imp, rank in zip(rep.feature_names, rep.importance[g], rep.importance_rank[g]):
            rows.append((g, name, float(imp), float(rank)))
    paths = [write_table(out / "importance.csv", ["gauge", "feature", "importance", "rank"], rows)]
    ordered = importance_order(rep)
    paths.append(write_table(out / "importance_summary.csv", ["position", "feature", "mean_rank"],
                             [(i + 1, n, rep.importance_mean_rank[n])
                              for i, n in enumerate(ordered)]))
    return paths


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


# plot-ready long tables

def improvements_long(summary: pd.DataFrame) -> pd.DataFrame:
    """(algorithm, level, mean, median) -> (algorithm, level, statistic, value)."""
    long = summary.melt(id_vars=["algorithm", "level"], value_vars=["mean", "median"],
                        var_name="statistic", value_name="value")
    return long.sort_values(["statistic", "algorithm", "level"], kind="stable").reset_index(drop=True)


def improvements_wide(long: pd.DataFrame) -> pd.DataFrame:
    """Inverse of `improvements_long`."""
    wide = long.pivot(index=["algorithm", "level"], columns="statistic", values="value")
    wide = wide.reset_index()[["algorithm", "level", "mean", "median"]]
    wide.columns.name = None
    return wide


def ranks_long(ranks: pd.DataFrame) -> pd.DataFrame:
    """(gauge, algorithm, level, rank) -> (gauge, level, algorithm, rank)."""
    return (ranks[["gauge", "level", "algorithm", "rank"]]
            .sort_values(["gauge", "level"], kind="stable").reset_index(drop=True))


def ranks_wide(long: pd.DataFrame) -> pd.DataFrame:
    """One row per (gauge, level), one column per algorithm."""
    wide = long.pivot(index=["gauge", "level"], columns="algorithm", values="rank").reset_index()
    wide.columns.name = None
    return wide


def write_plotdata(reports_dir, out_dir) -> list[Path]:
    """Emit long-format tables from an existing reports directory."""
    src = Path(reports_dir)
    needed = ["improvements_summary.csv", "ranks.csv"]
    for name in needed:
        if not (src / name).is_file():
            raise FileNotFoundError(f"missing report: {src / name}")
    out = Path(out_dir)
    written = []
    imp = improvements_long(pd.read_csv(src / "improvements_summary.csv"))
    written.append(write_table(out / "improvements_long.csv", list(imp.columns),
                               imp.itertuples(index=False)))
    overall_path = src / "improvements_overall.csv"
    if overall_path.is_file():
        ov = pd.read_csv(overall_path).melt(id_vars=["algorithm", "ordering"],
                                            value_vars=["mean", "median"],
                                            var_name="statistic", value_name="value")
        written.append(write_table(out / "improvements_overall_long.csv", list(ov.columns),
                                   ov.itertuples(index=False)))
    rk = ranks_long(pd.read_csv(src / "ranks.csv"))
    written.append(write_table(out / "ranks_long.csv", list(rk.columns), rk.itertuples(index=False)))
    imp_path = src / "importance.csv"
    if imp_path.is_file():
        im = pd.read_csv(imp_path)[["gauge", "feature", "rank"]]
        written.append(write_table(out / "importance_long.csv", list(im.columns),
                                   im.itertuples(index=False)))
    return written
