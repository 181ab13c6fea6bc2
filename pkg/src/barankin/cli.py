"""Command-line front end.

Exit codes: 0 result (including incompatibility and divergence findings),
2 bad config or input, 3 square-integrability postulate violated,
4 rank deficiency after deflation, 5 numerical diagnostics failure.
"""

from __future__ import annotations

import argparse
import copy
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .commands import COMMANDS
from .config import load_config
from .errors import (
    BarankinError,
    DiagnosticsError,
    PostulateViolationError,
    RankDeficiencyError,
)
from .report import write_report, write_trajectory_csv

OUTPUT_DIR_ENV = "BARANKIN_OUTPUT_DIR"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_POSTULATE = 3
EXIT_RANK = 4
EXIT_DIAGNOSTICS = 5


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or ".")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="barankin", description="Vector Barankin covariance bounds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "bound": "bound matrices for explicit test points",
        "search": "greedy search for the tightest bound",
        "certify": "construct and certify the span estimator",
        "crb": "Cramer-Rao limit and comparison",
        "verify": "check an estimator's covariance against a bound",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, type=Path, metavar="PATH")
        s.add_argument("--out", type=Path, metavar="PATH", help="report path")
        s.add_argument("--seed", type=int, help="override mc.seed")
        s.add_argument("--samples", type=int, help="override mc.samples")
        s.add_argument("--tol", type=float, help="override tolerance.psd_eps")
        s.add_argument("--quiet", action="store_true", help="print nothing on success")
        if name == "search":
            s.add_argument("--trajectory", type=Path, metavar="PATH", help="trajectory CSV path")
    return p


def _resolve(path: str | Path | None, default: str) -> Path:
    p = Path(path) if path else Path(default)
    return p if p.is_absolute() else output_dir() / p


def build_report(command: str, cfg, result: dict, warnings: list, elapsed: float,
                 overrides: dict) -> dict:
    return {
        "tool": "barankin",
        "version": __version__,
        "command": command,
        "config": copy.deepcopy(cfg.raw),
        "overrides": {k: v for k, v in overrides.items() if v is not None},
        "result": result,
        "warnings": warnings,
        "elapsed_seconds": elapsed,
    }


def run(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "samples": args.samples, "psd_eps": args.tol}
    err = sys.stderr
    try:
        t0 = time.perf_counter()
        cfg = load_config(args.config, **overrides)
        result, warnings = COMMANDS[args.command](cfg)
        elapsed = time.perf_counter() - t0
    except PostulateViolationError as exc:
        print(f"error: {exc}", file=err)
        print(f"offending pair: {np.asarray(exc.theta1).tolist()} {np.asarray(exc.theta2).tolist()}", file=err)
        return EXIT_POSTULATE
    except RankDeficiencyError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_RANK
    except DiagnosticsError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_DIAGNOSTICS
    except (BarankinError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT

    report = build_report(args.command, cfg, result, warnings, elapsed, overrides)
    out = args.out if args.out is not None else _resolve(cfg.output_path, f"{args.command}_report.json")
    write_report(report, out)
    if args.command == "search":
        csv_path = getattr(args, "trajectory", None) or (
            _resolve(cfg.trajectory_csv, "") if cfg.trajectory_csv else None)
        if csv_path is not None:
            write_trajectory_csv(result["iterations"], csv_path, cfg.model.param_dim)
    if not args.quiet:
        for w in warnings:
            print(f"warning: {w}", file=err)
        print(out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
