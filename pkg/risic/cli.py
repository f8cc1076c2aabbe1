# src/risic/cli.py
import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from .config import ConfigFile, AoConfig, SolverSettings, SystemConfig, load_config
from .exceptions import RisError
from .services.harness import (
    Experiment,
    any_failed,
    emit,
    load_records,
    run_experiment,
    summarize,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risic", description="RIS phase-shift optimization experiments"
    )
    parser.add_argument("--log-level", default="WARNING", help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a Monte-Carlo sweep")
    run.add_argument("--config", help="TOML configuration file")
    run.add_argument("--sweep", choices=["power", "elements", "iters"])
    run.add_argument("--methods", help="Comma-separated subset of AO,IC,ICAO")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", required=True, help="Output file")
    run.add_argument("--format", choices=["csv", "json"], default="csv")

    summary = sub.add_parser("summarize", help="Summarize a result file")
    summary.add_argument("--in", dest="path", required=True, help="CSV or JSON result file")
    return parser


def _experiment(args: argparse.Namespace) -> Experiment:
    config = (
        load_config(args.config)
        if args.config
        else ConfigFile(
            system=SystemConfig(),
            ao=AoConfig(),
            solver=SolverSettings.from_env(),
            experiment={},
        )
    )
    if args.seed is not None:
        config.system = config.system.replace(seed=args.seed)
    methods = [m.strip() for m in args.methods.split(",")] if args.methods else None
    return Experiment.from_config(
        config,
        sweep=args.sweep,
        methods=methods,
        trials=args.trials,
        workers=args.workers,
        output_path=args.out,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the risic command.

    Returns 0 when every record is ok, 2 when any record failed and 1 on
    configuration or I/O errors.
    """
    load_dotenv()
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "summarize":
            records = load_records(args.path)
            table = summarize(records)
            print(table.to_string(index=False))
            if table.attrs.get("omitted"):
                print(f"omitted groups without ok records: {table.attrs['omitted']}")
            return 2 if any_failed(records) else 0

        experiment = _experiment(args)
        records = run_experiment(experiment)
        emit(records, args.out, args.format)
        return 2 if any_failed(records) else 0
    except (RisError, OSError) as e:
        logging.error(f"risic {args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
