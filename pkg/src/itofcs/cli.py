"""Command-line entry point: simulate, calibrate, reconstruct, evaluate, matrix-info.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import pipeline
from .config import METHODS, ConfigError, ExperimentConfig
from .io import HashMismatch
from .sensing import load_matrix

log = logging.getLogger("itofcs")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset after it
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                   help="experiment config JSON (defaults apply to missing keys)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="override the config seed")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS,
                   help="artifact directory (default: ./out)")
    p.add_argument("--method", default=argparse.SUPPRESS,
                   help=f"comma-separated list from {', '.join(METHODS)}, or 'all'")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker processes for per-pixel solvers (default 1)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="itofcs", parents=[common], description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sub.add_parser("simulate", parents=[common], help="render the configured scene")
    cal = sub.add_parser("calibrate", parents=[common], help="emulate the calibration scan")
    cal.add_argument("--noisy", action="store_true", help="use the config noise model")
    cal.add_argument("--csv", action="store_true", help="also write matrix.csv")
    sub.add_parser("reconstruct", parents=[common], help="recover depth from simulated taps")
    sub.add_parser("evaluate", parents=[common], help="score reconstructions against truth")
    info = sub.add_parser("matrix-info", parents=[common], help="coherence, rank, cluster sizes")
    info.add_argument("--matrix", type=Path, help="sensing-matrix file (default: analytic)")
    return parser


def _methods(value: Optional[str], cfg: ExperimentConfig) -> List[str]:
    if value is None:
        return [cfg.solver["method"]]
    if value == "all":
        return [m for m in METHODS if m != "naive_single"]
    names = [m.strip() for m in value.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise UsageError(f"unknown method(s) {bad or value!r}; choose from {', '.join(METHODS)}")
    return names


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad usage
    opts = vars(args)
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(opts["config"]) if "config" in opts else ExperimentConfig.from_dict()
        cfg = cfg.with_seed(opts.get("seed"))
        out = Path(opts.get("out", "out"))
        threads = int(opts.get("threads", 1))
        if threads < 1:
            raise UsageError("--threads must be at least 1")
        cmd = args.command
        if cmd == "simulate":
            names = pipeline.run_simulate(cfg, out)
        elif cmd == "calibrate":
            names = pipeline.run_calibrate(cfg, out, args.noisy, args.csv)
        elif cmd == "reconstruct":
            names = pipeline.run_reconstruct(cfg, out, _methods(opts.get("method"), cfg), threads)
        elif cmd == "evaluate":
            methods = _methods(opts["method"], cfg) if "method" in opts else None
            names = pipeline.run_evaluate(cfg, out, methods)
        else:
            A = load_matrix(args.matrix) if args.matrix else pipeline.analytic_matrix(cfg)
            info = pipeline.matrix_info(A, cfg.solver["k_clusters"], cfg.solver["seed"])
            print(json.dumps(info, indent=2, sort_keys=True))
            return EXIT_OK
        for n in names:
            print(out / n)
        return EXIT_OK
    except (UsageError, ConfigError, HashMismatch) as exc:
        print(f"itofcs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"itofcs: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
