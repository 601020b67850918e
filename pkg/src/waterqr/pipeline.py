"""Per-gauge experiment: prepare, split, fit, forecast, combine and score."""

from __future__ import annotations

import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .evaluate import (ALGORITHMS, BENCHMARK, COMBINERS, INDIVIDUAL, EvaluationReport,
                       aggregate_report, combine, importance_ranks, spearman_matrix)
from .forest import fit_quantile_forest, forest_variable_importance
from .gbm import fit_gbm_quantile
from .io import read_flow_csv, read_meteo_csv
from .linear import fit_linear_boost, fit_linear_qr
from .prep import FEATURE_NAMES, MeteoTable, chronological_split, prepare_gauge
from .qrnn import DEFAULT_SCHEDULE, fit_qrnn
from .quantile import ProbabilisticForecast, average_quantile_score, repair_crossing
from .reports import write_importance, write_json, write_reports

logger = logging.getLogger(__name__)

_ALG_CODES = {name: i for i, name in enumerate(INDIVIDUAL)}


def derive_seed(seed: int, gauge_id: str, algorithm: str, level_index: int = 0) -> int:
    """Stable 32-bit seed for one (gauge, algorithm, level) fit."""
    seq = np.random.SeedSequence([seed, zlib.crc32(gauge_id.encode("utf-8")),
                                  _ALG_CODES.get(algorithm, 99), level_index])
    return int(seq.generate_state(1)[0])


@dataclass
class GaugeResult:
    gauge_id: str
    ok: bool = True
    error: str = ""
    n_samples: int = 0
    n_train: int = 0
    n_test: int = 0
    outliers: int = 0
    missing_days: int = 0
    scores: dict = field(default_factory=dict)
    crossing: dict = field(default_factory=dict)
    forecasts: dict = field(default_factory=dict)
    test_dates: tuple = ()
    observed: tuple = ()
    importance: np.ndarray | None = None
    spearman: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def fit_and_forecast(train, test, cfg: ExperimentConfig, gauge_id: str,
                     timings: dict | None = None, warnings: list | None = None):
    """Fit every enabled learner and return raw [test x level] predictions.

    The benchmark is always fitted. The forest is fitted once and queried at
    all levels; the other learners are fitted per level.
    """
    levels = cfg.experiment.levels
    seed = cfg.experiment.seed
    alg = cfg.algorithms
    timings = {} if timings is None else timings
    warnings = [] if warnings is None else warnings
    raw: dict[str, np.ndarray] = {}
    forest_model = None

    def timed(name, fn):
        t0 = time.perf_counter()
        out = fn()
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0
        return out

    for name in INDIVIDUAL:
        if name != BENCHMARK and not alg.enabled(name):
            continue
        cols = []
        if name == "forest":
            forest_model = timed(name, lambda: fit_quantile_forest(
                train.X, train.y, alg.forest.params(), derive_seed(seed, gauge_id, name)))
            raw[name] = forest_model.predict_quantiles(test.X, levels)
            continue
        for k, a in enumerate(levels):
            if name == "qr":
                model = timed(name, lambda: fit_linear_qr(train.X, train.y, a))
            elif name == "linear_boost":
                s = alg.linear_boost
                model = timed(name, lambda: fit_linear_boost(
                    train.X, train.y, a, s.m_stop, s.nu, s.validation_fraction))
            elif name == "gbm":
                model = timed(name, lambda: fit_gbm_quantile(
                    train.X, train.y, a, alg.gbm.params(), derive_seed(seed, gauge_id, name, k)))
            else:
                s = alg.qrnn
                model = timed(name, lambda: fit_qrnn(
                    train.X, train.y, a, DEFAULT_SCHEDULE[:s.schedule_length], s.restarts,
                    derive_seed(seed, gauge_id, name, k), s.max_iter, penalty=s.penalty))
                if model.restarts_abandoned:
                    warnings.append(f"{gauge_id}: qrnn level {a}: "
                                    f"{model.restarts_abandoned} restart(s) abandoned")
            cols.append(model.predict(test.X))
        raw[name] = np.column_stack(cols)
    return raw, forest_model


def run_gauge(gauge_id: str, flow_path: str, meteo: MeteoTable, cfg: ExperimentConfig,
              forecast: bool = True) -> GaugeResult:
    """Full experiment for one gauge; failures are captured, not raised."""
    res = GaugeResult(gauge_id)
    try:
        raw_flow = read_flow_csv(flow_path, gauge_id)
        exclusions = [(e.start, e.end) for e in cfg.data.exclusions
                      if e.gauge is None or e.gauge == gauge_id]
        data, cleaned, report = prepare_gauge(raw_flow, meteo, cfg.data.max_missing_fraction,
                                              exclusions)
        res.outliers = len(report.flagged)
        res.missing_days = int(cleaned.missing.sum())
        if res.outliers:
            res.warnings.append(f"{gauge_id}: {res.outliers} outlier day(s) removed")
        train, test = chronological_split(data, cfg.experiment.train_fraction)
        res.n_samples, res.n_train, res.n_test = len(data), len(train), len(test)

        columns = np.column_stack([data.y, data.X])
        res.spearman = spearman_matrix(columns)

        levels = cfg.experiment.levels
        if not forecast:
            model = fit_quantile_forest(train.X, train.y, cfg.algorithms.forest.params(),
                                        derive_seed(cfg.experiment.seed, gauge_id, "forest"))
            res.importance = forest_variable_importance(model)
            return res

        raw, forest_model = fit_and_forecast(train, test, cfg, gauge_id, res.timings,
                                             res.warnings)
        dates = tuple(test.dates.astype(object))
        forecasts: dict[str, ProbabilisticForecast] = {}
        for name, values in raw.items():
            forecasts[name] = repair_crossing(values, dates, levels)
            res.crossing[name] = forecasts[name].crossing_rate
        for comb in COMBINERS:
            if cfg.algorithms.enabled(comb):
                forecasts[comb] = combine(forecasts, comb.split("_")[0])
        observed = dict(zip(dates, test.y))
        for name, fc in forecasts.items():
            for a in levels:
                res.scores[(name, a)] = average_quantile_score(fc, observed, a).average_score
        if forest_model is not None:
            res.importance = forest_variable_importance(forest_model)
        res.forecasts = {k: v.values for k, v in forecasts.items()}
        res.test_dates = tuple(str(d) for d in test.dates)
        res.observed = tuple(float(v) for v in test.y)
    except Exception as exc:  # one bad gauge must not sink the run
        logger.warning("gauge %s skipped: %s", gauge_id, exc)
        res.ok = False
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def discover_gauges(cfg: ExperimentConfig) -> list[tuple[str, Path]]:
    flow_dir = cfg.path(cfg.data.flow_dir)
    if not flow_dir.is_dir():
        raise FileNotFoundError(f"flow directory not found: {flow_dir}")
    gauges = sorted((p.stem, p) for p in flow_dir.glob("*.csv"))
    if cfg.data.include:
        gauges = [g for g in gauges if g[0] in cfg.data.include]
    return [g for g in gauges if g[0] not in cfg.data.exclude]


def run_experiment(cfg: ExperimentConfig, forecast: bool = True) -> tuple[list[GaugeResult], dict]:
    """Run every gauge (in parallel when configured) and merge by gauge id."""
    meteo_path = cfg.path(cfg.data.meteo_file)
    if not meteo_path.is_file():
        raise FileNotFoundError(f"meteorological file not found: {meteo_path}")
    meteo = read_meteo_csv(meteo_path)
    gauges = discover_gauges(cfg)
    if not gauges:
        raise FileNotFoundError(f"no gauge files selected in {cfg.path(cfg.data.flow_dir)}")
    t0 = time.perf_counter()
    if cfg.experiment.workers > 1 and len(gauges) > 1:
        with ProcessPoolExecutor(max_workers=cfg.experiment.workers) as pool:
            futures = [pool.submit(run_gauge, g, str(p), meteo, cfg, forecast) for g, p in gauges]
            results = [f.result() for f in futures]
    else:
        results = [run_gauge(g, str(p), meteo, cfg, forecast) for g, p in gauges]
    results.sort(key=lambda r: r.gauge_id)
    manifest = {
        "config_hash": cfg.digest(),
        "code_version": __version__,
        "config": cfg.to_dict(),
        "feature_names": list(FEATURE_NAMES),
        "gauges": {
            r.gauge_id: {
                "ok": r.ok, "error": r.error, "samples": r.n_samples, "train": r.n_train,
                "test": r.n_test, "outliers_removed": r.outliers, "missing_days": r.missing_days,
                "fit_seconds": {k: round(v, 3) for k, v in sorted(r.timings.items())},
                "crossing_rate": {k: v for k, v in sorted(r.crossing.items())},
            } for r in results
        },
        "warnings": [w for r in results for w in r.warnings]
        + [f"{r.gauge_id}: skipped ({r.error})" for r in results if not r.ok],
        "wall_seconds": round(time.perf_counter() - t0, 3),
    }
    return results, manifest


def collect_report(results: list[GaugeResult], cfg: ExperimentConfig):
    """Deterministic merge of per-gauge results into an `EvaluationReport`."""
    ok = [r for r in results if r.ok]
    scores = {(r.gauge_id, alg, lv): s for r in ok for (alg, lv), s in r.scores.items()}
    importances = {r.gauge_id: r.importance for r in ok if r.importance is not None}
    ranked = [a for a in ALGORITHMS if cfg.algorithms.enabled(a)]
    if scores:
        return aggregate_report(scores, importances, FEATURE_NAMES, ranked=ranked)
    rep = EvaluationReport([], [], list(cfg.experiment.levels), feature_names=list(FEATURE_NAMES))
    if importances:
        rep.gauges = sorted(importances)
        for g in rep.gauges:
            rep.importance[g] = np.asarray(importances[g], dtype=float)
            rep.importance_rank[g] = importance_ranks(rep.importance[g])
        stacked = np.stack([rep.importance_rank[g] for g in rep.gauges])
        rep.importance_mean_rank = dict(zip(FEATURE_NAMES, map(float, stacked.mean(axis=0))))
    return rep


def write_run(results: list[GaugeResult], manifest: dict, cfg: ExperimentConfig,
              out_dir, importance_only: bool = False) -> list[Path]:
    """Write the manifest first, then the reports under ``<out>/reports``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_json(out / "manifest.json", manifest)]
    rep = collect_report(results, cfg)
    reports = out / "reports"
    if importance_only:
        if rep.importance:
            written.extend(write_importance(rep, reports))
        return written
    ok = [r for r in results if r.ok]
    spearman = {r.gauge_id: r.spearman for r in ok}
    forecasts = {r.gauge_id: (r.test_dates, r.observed, r.forecasts) for r in ok}
    written.extend(write_reports(rep, reports, spearman, forecasts))
    return written
