"""Command line entry point.

    rtgauntlet <stage> [--config cfg.yaml] [--seed N] [--out DIR] [k.ey=value ...]

Stages: train, adv-train, attack, evaluate, tune, bpda-train, diagnose,
report, table2-desk.  Extra positional arguments of the form
`section.key=value` override config entries (values parsed as YAML).
"""

from __future__ import annotations

import argparse
import sys

from ..errors import RTGauntletError
from .config import load_config
from .runner import STAGES, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtgauntlet",
        description="random-transformation defenses, attacks on them, and their evaluation",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="experiment seed override")
        p.add_argument("--out", default="runs/default", help="run directory")
        p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="dotted config overrides, e.g. attack.steps=200")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, seed=args.seed)
        run_experiment(cfg, args.out, [args.stage])
    except RTGauntletError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
