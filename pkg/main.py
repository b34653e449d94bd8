#!/usr/bin/env python3
"""
EPSim - Euler-Poisson / Klein-Gordon Simulation Harness
Main Entry Point

Runs the pseudospectral solver, the decay measurements and the lemma and
normal-form verification tasks from run configuration files.

Exit codes: 0 all configured assertions passed, 1 an assertion failed,
2 configuration or usage error, 3 numerical error during a run.
"""

import argparse
import sys
from typing import List, Optional

from src.config import config
from src.exceptions import ConfigurationError, EPSimError
from src.harness import HarnessResult, run_sweep, run_task
from src.logging_config import setup_logging
from src.run_config import TASKS, RunConfig, load_run_config

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Pseudospectral Euler-Poisson (Klein-Gordon form) simulator and verification harness.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Nonlinear run with norm bookkeeping:
  python main.py simulate --config data/configs/default.cfg

  # Free Klein-Gordon decay:
  python main.py linear-decay --config data/configs/linear.cfg

  # Refit a norms table:
  python main.py decay-fit --config data/configs/default.cfg --csv runs/simulate/norms.csv

  # Phase, deformation and factorization scans:
  python main.py verify-lemmas --samples 100000

  # Integration-by-parts identity on a 16x16 run:
  python main.py normal-form-check --config data/configs/normal_form.cfg
        """,
    )
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Strict deterministic mode (single transform worker)",
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    parser.add_argument("--log-file", default=None, help="Also log to this file")

    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        cmd = sub.add_parser(task, help=f"Run the {task} task")
        cmd.add_argument("--config", metavar="CFG", help="Run configuration file")
        cmd.add_argument("--output-dir", help="Directory for run outputs")
        cmd.add_argument("--samples", type=int, help="Sample count for scans")
        cmd.add_argument("--t-end", type=float, help="Final time")
        cmd.add_argument(
            "--no-assert",
            action="store_true",
            help="Report criteria without failing the exit code",
        )
        if task == "decay-fit":
            cmd.add_argument("--csv", required=True, help="Norms CSV to refit")
            cmd.add_argument("--columns", nargs="*", help="Columns to fit")
        if task in ("simulate", "linear-decay"):
            cmd.add_argument(
                "--sweep",
                nargs="+",
                metavar="CFG",
                help="Run several configurations as independent jobs",
            )
            cmd.add_argument("--workers", type=int, default=1, help="Sweep processes")
    return parser


def _resolve(args: argparse.Namespace, path: Optional[str]) -> RunConfig:
    run = load_run_config(path) if path else RunConfig()
    run = run.with_overrides(
        task=args.task,
        output_dir=args.output_dir,
        samples=args.samples,
        t_end=args.t_end,
    )
    if args.no_assert:
        run = run.with_overrides(check=False)
    return run.validate()


def _report(result: HarnessResult) -> None:
    print(f"\n--- {result.task} ({result.elapsed:.1f}s) ---")
    for criterion in result.criteria:
        if criterion.skipped:
            print(f"  - {criterion.name}: skipped ({criterion.detail})")
            continue
        mark = "✓" if criterion.passed else "✗"
        print(
            f"  {mark} {criterion.name}: measured {criterion.measured}, "
            f"threshold {criterion.threshold}"
        )
    for name, path in result.outputs.items():
        print(f"  {name}: {path}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    setup_logging(log_file=args.log_file, log_level=args.log_level or config.LOG_LEVEL)
    if args.deterministic:
        config.set_deterministic(True)

    is_valid, problems = config.validate_required()
    if not is_valid:
        print(f"⚠️ Configuration Error: {'; '.join(problems)}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if getattr(args, "sweep", None):
            runs = [_resolve(args, path) for path in args.sweep]
            summaries = run_sweep(runs, workers=args.workers)
            for summary in summaries:
                mark = "✓" if summary["passed"] else "✗"
                print(f"  {mark} {summary['task']}: {summary['outputs'].get('summary')}")
            return EXIT_OK if all(s["passed"] for s in summaries) else EXIT_FAILED

        run = _resolve(args, args.config)
        options = {}
        if args.task == "decay-fit":
            options = {"csv_path": args.csv, "columns": args.columns}
        result = run_task(run, **options)
    except ConfigurationError as e:
        print(f"✗ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EPSimError as e:
        print(f"✗ Numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    _report(result)
    return EXIT_OK if result.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
