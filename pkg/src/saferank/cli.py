"""Command line entry points: gen-instance, run, aggregate, plot."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .click_models import MODEL_KINDS, SCENARIOS, generate_instance, save_instance
from .errors import ConfigurationError, InputContractError
from .harness import (
    AGGREGATE_CSV,
    RUNS_CSV,
    aggregate,
    load_config,
    plot_series,
    read_aggregate_csv,
    read_runs_csv,
    run_and_emit,
    write_aggregate_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saferank",
        description="Simulation laboratory for safe online learning to re-rank.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-instance", help="generate a synthetic instance JSON file")
    gen.add_argument("--scenario", required=True, choices=SCENARIOS)
    gen.add_argument("--model", required=True, choices=MODEL_KINDS)
    gen.add_argument("--L", type=int, required=True, help="catalog size")
    gen.add_argument("--K", type=int, required=True, help="display size")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output instance JSON path")

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="experiment config JSON path")
    run.add_argument("--out", help="output directory (overrides config out_dir)")
    run.add_argument("--T", type=int, help="override horizon")
    run.add_argument("--runs", type=int, help="override number of runs")
    run.add_argument("--seed", type=int, help="override master seed")
    run.add_argument("--delta", type=float, help="override confidence level delta")
    run.add_argument("--algorithms", help="override algorithm ids (comma separated)")
    run.add_argument("--workers", type=int, help="override worker pool size")
    run.add_argument("--engine", choices=("auto", "compiled", "stepwise"),
                     default="auto", help="simulation engine (default: auto)")

    agg = sub.add_parser("aggregate", help="rebuild aggregate.csv from runs.csv")
    agg.add_argument("--in", dest="in_dir", required=True,
                     help="directory containing runs.csv")

    plot = sub.add_parser("plot", help="render charts from aggregate.csv")
    plot.add_argument("--in", dest="in_dir", required=True,
                      help="directory containing aggregate.csv")

    return parser


def _cmd_gen_instance(args: argparse.Namespace) -> int:
    instance = generate_instance(args.scenario, args.L, args.K, args.seed, args.model)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(instance, out)
    print(f"wrote {out} ({args.model}, L={args.L}, K={args.K}, scenario={args.scenario})")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.T is not None:
        overrides["horizon"] = args.T
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.algorithms is not None:
        overrides["algorithms"] = tuple(
            a.strip() for a in args.algorithms.split(",") if a.strip()
        )
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
    config.validate()
    out_dir = args.out if args.out is not None else config.out_dir
    if out_dir is None:
        raise ConfigurationError("out_dir: give --out or set out_dir in the config")
    results = run_and_emit(config, out_dir, engine=args.engine)
    print(f"wrote {len(results)} runs to {out_dir} "
          f"({', '.join(sorted(config.algorithms))}; T={config.horizon}, "
          f"runs={config.runs})")
    return 0


def _cmd_aggregate(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    results = read_runs_csv(in_dir / RUNS_CSV)
    series = aggregate(results)
    write_aggregate_csv(series, in_dir / AGGREGATE_CSV)
    print(f"wrote {in_dir / AGGREGATE_CSV}")
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    series = read_aggregate_csv(in_dir / AGGREGATE_CSV)
    paths = plot_series(series, in_dir)
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return 0


_COMMANDS = {
    "gen-instance": _cmd_gen_instance,
    "run": _cmd_run,
    "aggregate": _cmd_aggregate,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, InputContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
