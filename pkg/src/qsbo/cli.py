"""``qsbo`` command line.

    qsbo run <application> [--config PATH] [--estimator canonical|mle|exact] [--m INT]
             [--shots INT] [--seed INT] [--out PREFIX] [--sweep | --optimize]
    qsbo budget <application> [--k INT] [--n INT]

Exit codes: 0 success, 2 configuration error, 3 oracle mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .applications import (
    APPLICATIONS, ESTIMATORS, ConfigError, ExperimentConfig, OracleMismatch,
    report_qubit_budget, run_experiment, write_outputs,
)

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsbo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("application", choices=APPLICATIONS)
    r.add_argument("--config", type=Path, help="JSON experiment config")
    r.add_argument("--estimator", choices=ESTIMATORS)
    r.add_argument("--m", type=int, help="canonical QAE evaluation qubits")
    r.add_argument("--shots", type=int, help="shots per Grover power (MLAE)")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", type=Path, help="output prefix for <out>.json and <out>*.csv")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--sweep", dest="mode", action="store_const", const="sweep")
    mode.add_argument("--optimize", dest="mode", action="store_const", const="optimize")

    b = sub.add_parser("budget", help="print the qubit budget of an application")
    b.add_argument("application", choices=APPLICATIONS)
    b.add_argument("--k", type=int, default=2)
    b.add_argument("--n", type=int, default=2)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
        data = ExperimentConfig.from_json(text).to_dict()
        if data["application"] != args.application:
            raise ConfigError("application",
                              f"config is for {data['application']!r}, not {args.application!r}")
    else:
        data = ExperimentConfig(args.application).to_dict()
    overrides = {"estimator": args.estimator, "m": args.m, "shots": args.shots,
                 "seed": args.seed, "mode": args.mode}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "budget":
            try:
                budget = report_qubit_budget(args.application, args.k, args.n)
            except ValueError as exc:
                raise ConfigError("budget", str(exc)) from None
            print(json.dumps(budget, indent=2))
            return EXIT_OK
        cfg = load_config(args)
        record = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleMismatch as exc:
        print(f"oracle mismatch: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    if args.out is not None:
        for path in write_outputs(record, args.out):
            print(path, file=sys.stderr)
    else:
        print(json.dumps(record.summary(), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
