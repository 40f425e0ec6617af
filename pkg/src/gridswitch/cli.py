"""Command-line entry point: ``train``, ``evaluate`` and ``aggregate``.

Exit status is 0 on success; each error class maps to its own code
(config 2, case load 3, I/O 4, checkpoint mismatch 5, anything else 1).
Set ``GRIDSWITCH_LOG`` to a logging level name (e.g. ``INFO``) for progress output.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError, GridSwitchError
from .harness import (
    AGENTS,
    RunConfig,
    aggregate_runs,
    config_from_mapping,
    evaluate_policy,
    load_config,
    run_multi_seed,
    run_training,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridswitch", description="Train and evaluate transmission-switching agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an agent for one or more seeds")
    train.add_argument("--case", help="case file, or a bundled name such as case14")
    train.add_argument("--algo", choices=sorted(AGENTS))
    train.add_argument("--episodes", type=int)
    train.add_argument("--seeds", help="comma-separated seed list, e.g. 1,2,3")
    train.add_argument("--config", help="flat JSON config; flags override its values")
    train.add_argument("--out", help="output directory")
    train.add_argument("--workers", type=int, default=1, help="parallel processes across seeds")

    ev = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--case", required=True)
    ev.add_argument("--episodes", type=int, default=10)

    agg = sub.add_parser("aggregate", help="mean and standard error across seed runs")
    agg.add_argument("--runs", required=True)
    return parser


def _train(args) -> None:
    config = load_config(args.config) if args.config else RunConfig()
    flags = {"case": args.case, "algo": args.algo, "episodes": args.episodes,
             "seeds": args.seeds, "out": args.out}
    config = config_from_mapping({k: v for k, v in flags.items() if v is not None}, base=config)
    RunConfig.__post_init__(config)
    if len(config.seeds) > 1:
        paths = run_multi_seed(config, workers=args.workers)
        for metric, path in paths.items():
            print(f"{metric}: {path}")
    else:
        print(run_training(config, config.seeds[0]))


def _evaluate(args) -> None:
    report = evaluate_policy(args.checkpoint, args.case, args.episodes)
    print(json.dumps(report, indent=2))


def _aggregate(args) -> None:
    for algo, paths in aggregate_runs(args.runs).items():
        for metric, path in paths.items():
            print(f"{algo} {metric}: {path}")


def main(argv=None) -> int:
    level = os.environ.get("GRIDSWITCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handlers = {"train": _train, "evaluate": _evaluate, "aggregate": _aggregate}
    try:
        handlers[args.command](args)
    except GridSwitchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
