"""Forecast combiners, relative improvements, rankings and Spearman reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .quantile import DomainError, ProbabilisticForecast, repair_crossing

INDIVIDUAL = ("qr", "linear_boost", "forest", "gbm", "qrnn")
COMBINERS = ("mean_combiner", "median_combiner")
ALGORITHMS = INDIVIDUAL + COMBINERS
BENCHMARK = "qr"


class AlignmentError(ValueError):
    pass


class UndefinedImprovementError(ZeroDivisionError):
    pass


def combine(forecasts: Mapping[str, ProbabilisticForecast], rule: str,
            members: Sequence[str] = INDIVIDUAL) -> ProbabilisticForecast:
    """Cellwise mean or type-7 median of the member forecasts, then crossing repair."""
    if rule not in ("mean", "median"):
        raise ValueError(f"unknown combination rule {rule!r}")
    missing = [m for m in members if m not in forecasts]
    if missing:
        raise AlignmentError(f"combiner needs forecasts from {', '.join(missing)}")
    first = forecasts[members[0]]
    for name in members[1:]:
        f = forecasts[name]
        if f.dates != first.dates or f.levels != first.levels:
            raise AlignmentError(f"forecast {name!r} is not aligned with {members[0]!r}")
    stack = np.stack([forecasts[m].values for m in members])
    combined = stack.mean(axis=0) if rule == "mean" else np.median(stack, axis=0)
    return repair_crossing(combined, first.dates, first.levels)


def relative_improvement(score: float, benchmark: float) -> float:
    """Percentage reduction of `score` relative to `benchmark` (positive = better)."""
    if benchmark == 0:
        raise UndefinedImprovementError("benchmark score is zero; improvement undefined")
    if benchmark < 0:
        raise DomainError("benchmark score must be positive")
    return 100.0 * (benchmark - score) / benchmark


def rank_algorithms(scores) -> np.ndarray:
    """Ranks with 1 for the lowest score; ties share the mean of their positions."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores must be finite")
    return rankdata(scores, method="average")


def spearman(x, y) -> float:
    """Pearson correlation of mid-ranks; NaN when either side has constant ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if x.size < 3:
        raise ValueError("spearman needs at least 3 pairs")
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        return float("nan")
    return float(np.clip((rx @ ry) / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman_matrix(columns: np.ndarray) -> np.ndarray:
    """Pairwise Spearman correlations of the columns of a [sample x variable] array."""
    k = columns.shape[1]
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = spearman(columns[:, i], columns[:, j])
    return out


def importance_ranks(importance) -> np.ndarray:
    """Rank 1 for the most important feature; ties share mean ranks."""
    return rankdata(-np.asarray(importance, dtype=float), method="average")


@dataclass
class EvaluationReport:
    """All comparison tables, keyed by tuples.

    ``scores``, ``improvements`` and ``ranks`` are keyed by
    (gauge, algorithm, level). ``improvement_summary`` maps
    (algorithm, level) to the mean and median over gauges, and
    ``improvement_overall`` maps (algorithm, ordering) to mean and median
    of the level-averaged improvement, where ordering says whether levels
    were averaged before (``levels_first``) or after (``gauges_first``)
    gauges. ``mean_rank`` is keyed by (algorithm, level).
    """

    gauges: list[str]
    algorithms: list[str]
    levels: list[float]
    scores: dict = field(default_factory=dict)
    improvements: dict = field(default_factory=dict)
    ranks: dict = field(default_factory=dict)
    improvement_summary: dict = field(default_factory=dict)
    improvement_overall: dict = field(default_factory=dict)
    mean_rank: dict = field(default_factory=dict)
    importance: dict = field(default_factory=dict)
    importance_rank: dict = field(default_factory=dict)
    importance_mean_rank: dict = field(default_factory=dict)
    feature_names: list[str] = field(default_factory=list)


def aggregate_report(scores: Mapping[tuple, float], importances: Mapping[str, np.ndarray] | None = None,
                     feature_names: Sequence[str] = (), ranked: Sequence[str] | None = None,
                     benchmark: str = BENCHMARK) -> EvaluationReport:
    """Build every comparison table from per-(gauge, algorithm, level) scores.

    Parameters
    ----------
    scores : mapping
        (gauge, algorithm, level) -> average quantile score. Every gauge must
        have the benchmark at every level.
    importances : mapping, optional
        gauge -> importance vector over `feature_names`.
    ranked : sequence of str, optional
        Algorithms entering the rank tables (default: all scored ones).
    """
    gauges = sorted({g for g, _, _ in scores})
    present = {alg for _, alg, _ in scores}
    algorithms = [a for a in ALGORITHMS if a in present] + sorted(present - set(ALGORITHMS))
    levels = sorted({lv for _, _, lv in scores})
    ranked = [a for a in algorithms if ranked is None or a in ranked]
    rep = EvaluationReport(gauges, algorithms, levels, feature_names=list(feature_names))
    rep.scores = {k: float(v) for k, v in sorted(scores.items())}

    for g in gauges:
        for lv in levels:
            bench = scores[(g, benchmark, lv)]
            for alg in algorithms:
                if (g, alg, lv) in scores:
                    rep.improvements[(g, alg, lv)] = relative_improvement(scores[(g, alg, lv)], bench)
            present_ranked = [alg for alg in ranked if (g, alg, lv) in scores]
            r = rank_algorithms([scores[(g, alg, lv)] for alg in present_ranked])
            for alg, value in zip(present_ranked, r):
                rep.ranks[(g, alg, lv)] = float(value)

    for alg in algorithms:
        for lv in levels:
            vals = [rep.improvements[(g, alg, lv)] for g in gauges if (g, alg, lv) in rep.improvements]
            if vals:
                rep.improvement_summary[(alg, lv)] = (float(np.mean(vals)), float(np.median(vals)))
            rk = [rep.ranks[(g, alg, lv)] for g in gauges if (g, alg, lv) in rep.ranks]
            if rk:
                rep.mean_rank[(alg, lv)] = float(np.mean(rk))
        per_gauge = [np.mean([rep.improvements[(g, alg, lv)] for lv in levels])
                     for g in gauges if all((g, alg, lv) in rep.improvements for lv in levels)]
        if per_gauge:
            rep.improvement_overall[(alg, "levels_first")] = (float(np.mean(per_gauge)),
                                                              float(np.median(per_gauge)))
        if all((alg, lv) in rep.improvement_summary for lv in levels):
            means = [rep.improvement_summary[(alg, lv)][0] for lv in levels]
            medians = [rep.improvement_summary[(alg, lv)][1] for lv in levels]
            rep.improvement_overall[(alg, "gauges_first")] = (float(np.mean(means)),
                                                              float(np.mean(medians)))

    if importances:
        for g in sorted(importances):
            imp = np.asarray(importances[g], dtype=float)
            rep.importance[g] = imp
            rep.importance_rank[g] = importance_ranks(imp)
        stacked = np.stack([rep.importance_rank[g] for g in sorted(importances)])
        rep.importance_mean_rank = dict(zip(feature_names, map(float, stacked.mean(axis=0))))
    return rep


def importance_order(rep: EvaluationReport) -> list[str]:
    """Feature names from most to least important by mean rank (stable on ties)."""
    names = list(rep.feature_names)
    return sorted(names, key=lambda n: (rep.importance_mean_rank[n], names.index(n)))
