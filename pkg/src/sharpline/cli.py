"""Command-line entry point.

    sharpline train         --config cfg [--out dir]
    sharpline quad-validate --config cfg [--out dir]
    sharpline mix-sweep     --config cfg [--out dir]
    sharpline plot          <log> --kind <kind> [--out dir]

Exit codes: 0 ok, 1 usage, 2 validation failure, 3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, plotting
from .config import load_config
from .errors import ConfigError, DatasetParseError, SharplineError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(harness.STATUS_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sharpline",
                     description="Critical-sharpness probes and stability labs")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("train", "quad-validate", "mix-sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key=value config file")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("plot")
    p.add_argument("log", help="probe JSONL or CSV table to render")
    p.add_argument("--kind", required=True, choices=plotting.PLOT_KINDS)
    p.add_argument("--out", default="out", help="output directory")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            os.makedirs(args.out, exist_ok=True)
            stem = os.path.splitext(os.path.basename(args.log))[0]
            out_path = os.path.join(args.out, f"{stem}_{args.kind}.svg")
            plotting.render(args.log, args.kind, out_path)
            print(out_path)
            return harness.STATUS_OK

        cfg = load_config(args.config)
        if args.command == "train":
            result = harness.cmd_train(cfg, args.out)
            print(f"trained {result.steps_run} steps, final loss "
                  f"{result.final_loss}; logs in {args.out}")
            if result.status == harness.STATUS_DIVERGENCE:
                print("training diverged", file=sys.stderr)
            return result.status
        if args.command == "quad-validate":
            status, path = harness.cmd_quad_validate(cfg, args.out)
            print(path)
            if status == harness.STATUS_VALIDATION:
                print("boundary errors exceed tolerance", file=sys.stderr)
            return status
        if args.command == "mix-sweep":
            status, path = harness.cmd_mix_sweep(cfg, args.out)
            print(path)
            return status
    except (ConfigError, FileNotFoundError) as exc:
        print(f"sharpline: {exc}", file=sys.stderr)
        return harness.STATUS_USAGE
    except (DatasetParseError, SharplineError) as exc:
        print(f"sharpline: {exc}", file=sys.stderr)
        return harness.STATUS_VALIDATION
    return harness.STATUS_USAGE


if __name__ == "__main__":
    sys.exit(main())
