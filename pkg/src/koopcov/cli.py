"""Command-line entry point.

Subcommands:
  estimation   run the estimation-error sweep, write estimation.csv
  prediction   run the prediction-error sweep, write prediction.csv
  validate     run the analytic-identity validation suite, write validation.json
  plot         render SVG charts from previously written CSVs
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    ExperimentConfig,
    emit_plots,
    run_estimation_experiment,
    run_prediction_experiment,
    run_validation_suite,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopcov",
        description="Koopman covariance estimation sweeps on the analytic OU test case",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("estimation", "prediction", "validate", "plot"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument(
            "--preset", choices=("quick", "full"), default="full",
            help="quick: m <= 5000 and 50 estimation replicates",
        )
        if name == "plot":
            p.add_argument("csvs", nargs="+", type=Path, help="CSV files to render")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    cfg.apply_preset(args.preset)
    if args.seed is not None:
        cfg.base_seed = args.seed
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "plot":
        for path in emit_plots(args.csvs, args.out):
            print(path)
        return 0
    cfg = _load_config(args)
    if args.command == "estimation":
        print(run_estimation_experiment(cfg, args.out))
    elif args.command == "prediction":
        print(run_prediction_experiment(cfg, args.out))
    elif args.command == "validate":
        path = run_validation_suite(cfg, args.out)
        print(path)
        import json

        checks = json.loads(Path(path).read_text())
        failures = [c for c in checks if c["status"] != "pass"]
        for c in checks:
            print(f"{c['status']:4s}  {c['check']}  ({c['measured']:.3e} <= {c['tolerance']:.1e})")
        return 1 if failures else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
