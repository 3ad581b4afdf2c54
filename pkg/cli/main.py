#!/usr/bin/env python3
"""HystSIR - Command-line entry point"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from cli.commands import (
    cmd_certify,
    cmd_equilibria,
    cmd_loop_diagram,
    cmd_simulate,
    cmd_sweep,
    cmd_verify_lemmas,
)
from cli.config import env_jobs, env_log_level, load_config
from hystsir.errors import HysteresisError, InvalidInput

logger = logging.getLogger(__name__)
console = Console(stderr=True)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _program(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"program must be comma-separated numbers, got {text!r}")
    if any(not (0.0 <= v <= 1.0) for v in values):
        raise argparse.ArgumentTypeError("program values must lie in [0, 1]")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hystsir",
        description="SIR dynamics with a Preisach hysteresis transmission rate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "certify", "verify-lemmas", "equilibria", "loop-diagram", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True)
        p.add_argument("--out", type=Path, default=None)
        if name == "loop-diagram":
            p.add_argument("--program", type=_program, required=True,
                           help="comma-separated target values of I, e.g. 0.6,0.3,0.6")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=None)
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "simulate":
            summary = cmd_simulate(config, args.out)
            console.print(f"✅ {summary['outcome']} limit={summary['limit']} on_segment={summary['on_segment']}")
        elif args.command == "loop-diagram":
            summary = cmd_loop_diagram(config, args.program, args.out)
            console.print(f"✅ {summary['n_samples']} loop samples written")
        elif args.command == "certify":
            summary = cmd_certify(config, args.out)
            console.print(f"✅ certificate: {summary['verdict']}")
        elif args.command == "verify-lemmas":
            summary = cmd_verify_lemmas(config, args.out)
            mark = "✅" if summary["failures"] == 0 else "❌"
            console.print(f"{mark} {summary['rows']} lemma rows, {summary['failures']} failures")
        elif args.command == "equilibria":
            summary = cmd_equilibria(config, args.out)
            console.print(f"✅ endemic segment I in [{summary['I_lo']:.10g}, {summary['I_hi']:.10g}]")
        else:
            jobs = args.jobs if args.jobs is not None else env_jobs()
            summary = cmd_sweep(config, args.out, jobs=jobs)
            console.print(f"✅ {summary['cells']} sweep cells: {json.dumps(summary['outcomes'])}")
    except ValidationError as e:
        console.print(f"❌ invalid config:\n{e}")
        return EXIT_VALIDATION
    except InvalidInput as e:
        console.print(f"❌ {type(e).__name__}: {e}")
        return EXIT_VALIDATION
    except HysteresisError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        console.print(f"❌ {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        # numerical library failures outside the domain hierarchy
        logger.error(f"{args.command} crashed: {type(e).__name__}: {e}")
        console.print(f"❌ unexpected {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    logging.basicConfig(
        level=env_log_level(),
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
    )
    sys.exit(run())


if __name__ == "__main__":
    main()
