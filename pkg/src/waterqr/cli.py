"""Command-line entry point: ``waterqr {run,importance,synth,plotdata}``.

Exit codes: 0 success, 1 some gauges skipped, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import synth
from .pipeline import run_experiment, write_run
from .reports import write_plotdata

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("waterqr")


def _load(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load_config(args.config)
    return cfg.with_overrides(seed=args.seed, workers=args.workers, output_dir=args.out)


def _experiment(args, forecast: bool) -> int:
    try:
        cfg = _load(args)
        results, manifest = run_experiment(cfg, forecast=forecast)
    except (config_mod.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.path(cfg.experiment.output_dir)
    write_run(results, manifest, cfg, out, importance_only=not forecast)
    skipped = [r for r in results if not r.ok]
    for r in skipped:
        print(f"warning: gauge {r.gauge_id} skipped: {r.error}", file=sys.stderr)
    if len(skipped) == len(results):
        print("error: every gauge was skipped", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote reports for {len(results) - len(skipped)} gauge(s) to {out / 'reports'}")
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_run(args) -> int:
    return _experiment(args, forecast=True)


def cmd_importance(args) -> int:
    return _experiment(args, forecast=False)


def cmd_synth(args) -> int:
    try:
        with open(args.config, "rb") as fh:
            data = config_mod.tomllib.load(fh)
        if "scenario" in data:
            data = data["scenario"]
        if args.seed is not None:
            data = {**data, "seed": args.seed}
        scenario = synth.SynthScenario.from_mapping(data)
        out = Path(args.out) if args.out else Path(args.config).parent
        written = synth.write_scenario(scenario, out)
    except FileNotFoundError as exc:
        print(f"error: scenario file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except (synth.ConfigError, config_mod.tomllib.TOMLDecodeError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(written)} file(s) to {out}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    reports = Path(args.reports)
    out = Path(args.out) if args.out else reports.parent / "plotdata"
    try:
        written = write_plotdata(reports, out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(written)} file(s) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="waterqr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="TOML configuration file")
        p.add_argument("--out", help="output directory (overrides the configuration)")
        p.add_argument("--workers", type=int, help="number of gauges processed in parallel")
        p.add_argument("--seed", type=int, help="master seed (overrides the configuration)")

    p = sub.add_parser("run", help="fit, forecast, score and write every report")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("importance", help="forest variable importance only")
    common(p)
    p.set_defaults(func=cmd_importance)
    p = sub.add_parser("synth", help="write a synthetic dataset from a scenario file")
    common(p)
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("plotdata", help="long-format tables from a reports directory")
    p.add_argument("reports", help="reports directory written by `run`")
    p.add_argument("--out", help="output directory (default: <reports>/../plotdata)")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be at least 1")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
