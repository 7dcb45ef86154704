"""Command-line front end: ``lamarck-vsr {run,analyze,fixed-robot,replay,validate-config}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import analysis
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .evo import run_experiment


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    return dataclasses.replace(config, **overrides).validate()


def cmd_run(args) -> int:
    config = _load(args)
    out = Path(config.out_dir)
    for r in range(config.runs):
        run_config = dataclasses.replace(config, seed=config.seed + r, runs=1)
        run_dir = out / f"seed_{run_config.seed}"
        try:
            run_experiment(run_config, run_dir)
        except Exception as exc:
            print(f"run with seed {run_config.seed} failed: {exc}", file=sys.stderr)
            return 1
        print(run_dir)
    return 0


def cmd_analyze(args) -> int:
    rows = analysis.aggregate(args.run_dirs, window=args.window, iqr_over=args.iqr_over)
    text = analysis.rows_to_csv(rows, analysis.AGGREGATE_COLUMNS)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_fixed_robot(args) -> int:
    config = _load(args)
    morphs = None
    if args.morphs:
        morphs = [line.strip() for line in Path(args.morphs).read_text().splitlines() if line.strip()]
    rows = analysis.fixed_robot(morphs, args.n_morphs, args.n_params, config.sensor_mode,
                                config.seed, config.sim)
    text = analysis.rows_to_csv(rows, analysis.FIXED_ROBOT_COLUMNS)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_replay(args) -> int:
    result = analysis.replay(args.evals, args.robot_id, args.eval_index)
    text = json.dumps(result)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if not result["match"]:
        print(f"recorded {result['recorded_f']!r} vs replayed {result['replayed_f']!r}",
              file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    config = _load(args)
    sys.stdout.write(dump_config(config))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lamarck-vsr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_flags(p, run_flags=False):
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int)
        if run_flags:
            p.add_argument("--runs", type=int)
            p.add_argument("--out", help="output directory for run logs")
            p.add_argument("--jobs", type=int)

    p = sub.add_parser("run", help="run evolutionary experiments")
    config_flags(p, run_flags=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="aggregate run logs into a CSV")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--iqr-over", choices=("runs", "individuals"), default="runs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fixed-robot", help="random controllers on fixed bodies, both directions")
    config_flags(p)
    p.add_argument("--morphs", help="file with one 25-character genome per line")
    p.add_argument("--n-morphs", type=int, default=10)
    p.add_argument("--n-params", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fixed_robot)

    p = sub.add_parser("replay", help="re-simulate a logged evaluation")
    p.add_argument("evals", help="path to evals.jsonl")
    p.add_argument("robot_id", type=int)
    p.add_argument("eval_index", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate-config", help="check a configuration and print it resolved")
    config_flags(p, run_flags=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (analysis.MissingLog, analysis.SchemaMismatch, analysis.RecordNotFound,
            analysis.MissingTheta) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
