"""Command-line entry point for the verification experiments.

Exit code 0 when every pass flag of the requested experiment is true; a
machine-readable JSON summary is written even when the run fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import MaxlowError
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    run_experiment,
    write_json,
)

_SUBCOMMANDS = {
    "solve-whole-space": "whole-space-solve",
    "lowfreq-sweep": "lowfreq-sweep",
    "limabs-sweep": "limabs-sweep",
    "neumann-check": "neumann-check",
    "spectrum": "spectrum",
    "static": "static-solve",
    "verify-b1": "verify-b1",
    "estimate-probe": "estimate-probe",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxlow",
        description="Low-frequency Maxwell verification experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output directory for CSV/JSON artifacts")
        p.add_argument("--seed", type=int, help="data-generation seed")
        p.add_argument("--threads", type=int, help="BLAS thread budget")
    return parser


def _set_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = _SUBCOMMANDS[args.command]
    if args.threads:
        _set_threads(args.threads)
    out_dir = args.out
    try:
        if args.config:
            cfg = ExperimentConfig.from_json(
                args.config, seed=args.seed, out_dir=out_dir,
                threads=args.threads)
            if cfg.experiment != experiment:
                raise MaxlowError(
                    f"config is for {cfg.experiment!r}, not {experiment!r}")
        else:
            if args.seed is None:
                raise MaxlowError("a seed is mandatory (--seed or config)")
            cfg = ExperimentConfig(experiment, args.seed, out_dir=out_dir,
                                   threads=args.threads)
        result = run_experiment(cfg)
    except (MaxlowError, OSError, json.JSONDecodeError) as exc:
        if out_dir:
            write_json({"experiment": experiment, "error": str(exc),
                        "passed": False},
                       os.path.join(out_dir, f"{experiment}.summary.json"))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for key, ok in result.flags.items():
        print(f"{result.name}: {key}: {'pass' if ok else 'FAIL'}")
    if result.slopes:
        for key, val in result.slopes.items():
            print(f"{result.name}: slope {key} = {val:.4f}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
