"""Command line front end for the experiment harness.

Each subcommand runs one experiment family from a JSON config (or a
built-in default), writes the delimited report into the output
directory, and optionally renders an SVG figure next to it.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

from .errors import FracsparseError
from .harness import (
    ExperimentConfig,
    emit_report,
    load_config,
    run_bloom_experiment,
    run_domination_experiment,
    run_fracpow_experiment,
    run_two_weight_experiment,
    run_verification_suite,
    run_weak_type_experiment,
    run_weight_survey,
)

__all__ = ["build_parser", "default_config", "main"]

_COMMAND_HELP = {
    "weights": "survey the characteristics of the configured weight pair",
    "dominate": "measure sparse domination constants over random data",
    "twoweight": "compare the measured form constant with its two-weight bound",
    "bloom": "compare the commutator form with the two-weight commutator bound",
    "fracpow": "check the fractional power quadrature against the spectral oracle",
    "weaktype": "measure weak-type constants of the fractional power",
    "verify": "run one small instance of every experiment family",
}

_DEFAULTS = {
    "weights": ExperimentConfig(
        depth=7, u_power=0.25, v_power=-0.25, p=2.0, q=3.0, alpha=0.5,
        csv_name="weights.csv", svg_name="weights.svg"),
    "twoweight": ExperimentConfig(
        depth=7, operator_kind="riesz", alpha=0.5, p0=1.0, q0=4.0,
        p=2.0, q=3.0, r=1.0, s=4.0, u_power=0.25, v_power=-0.25,
        trials=8, csv_name="twoweight.csv", svg_name="twoweight.svg"),
    "dominate": ExperimentConfig(
        depth=8, operator_kind="riesz", alpha=0.5, p0=1.0, q0=4.0,
        order=1, trials=8, csv_name="dominate.csv", svg_name="dominate.svg"),
    "bloom": ExperimentConfig(
        depth=7, operator_kind="riesz", alpha=0.25, p0=1.0, q0=math.inf,
        p=2.0, q=4.0, order=1, u_power=0.2, v_power=-0.2, trials=6,
        csv_name="bloom.csv", svg_name="bloom.svg"),
    "fracpow": ExperimentConfig(
        depth=8, operator_kind="divergence_form", coefficient=1.0,
        alpha=0.5, kappa=2.0, nodes=200,
        csv_name="fracpow.csv", svg_name="fracpow.svg"),
    "weaktype": ExperimentConfig(
        depth=6, operator_kind="divergence_form", coefficient=1.0,
        alpha=0.5, kappa=2.0, p0=1.0, q0=math.inf, trials=4,
        csv_name="weaktype.csv", svg_name="weaktype.svg"),
    "verify": ExperimentConfig(
        depth=5, trials=4, csv_name="verify.csv", svg_name="verify.svg"),
}


def default_config(command: str) -> ExperimentConfig:
    return _DEFAULTS[command]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracsparse",
        description="randomized experiments against closed-form weighted bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in _COMMAND_HELP.items():
        cmd = sub.add_parser(name, help=text, description=text)
        cmd.add_argument("--config", type=Path, default=None,
                         help="JSON experiment configuration")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the run seed (64-bit unsigned)")
        cmd.add_argument("--out", type=Path, default=None,
                         help="output directory for the report files")
        cmd.add_argument("--csv", action="store_true",
                         help="write the delimited report (the default "
                              "output when no format flag is given)")
        cmd.add_argument("--svg", action="store_true",
                         help="render the report figure; combine with "
                              "--csv to also keep the delimited report")
    return parser


def _collect_rows(command: str, cfg: ExperimentConfig):
    if command == "weights":
        return run_weight_survey(cfg)
    if command == "twoweight":
        return run_two_weight_experiment(cfg).rows()
    if command == "dominate":
        return run_domination_experiment(cfg).rows()
    if command == "bloom":
        return run_bloom_experiment(cfg).rows()
    if command == "fracpow":
        return run_fracpow_experiment(cfg).rows()
    if command == "weaktype":
        return run_weak_type_experiment(cfg).rows()
    if command == "verify":
        return run_verification_suite(cfg)
    raise FracsparseError(f"unknown command {command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config(args.command)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=str(args.out))
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = _collect_rows(args.command, cfg)
        # delimited output is the default; format flags narrow the set
        csv_path = out_dir / cfg.csv_name if args.csv or not args.svg else None
        svg_path = out_dir / cfg.svg_name if args.svg else None
        written = emit_report(rows, csv_path, svg_path, title=args.command)
    except FracsparseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
