"""Command-line interface.

Subcommands: ``synth`` (generate observed data), ``invert`` (run one
inversion), ``verify`` (oracle checks), ``compare`` (tabulate methods).
Exit codes: 0 success, 2 verification failure, 3 configuration error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .driver import compare, invert, parse_config, synthesize
from .errors import ConfigurationError, NumericalError
from .verification import CHECKS, run_all, run_check

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwi",
        description="Frequency-domain 2D acoustic full-waveform inversion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic observed data")
    p_synth.add_argument("--config", required=True)

    p_invert = sub.add_parser("invert", help="run an inversion")
    p_invert.add_argument("--config", required=True)
    p_invert.add_argument("--method", help="override the configured method")
    p_invert.add_argument("--out", help="override the configured output directory")

    p_verify = sub.add_parser("verify", help="run built-in oracle checks")
    p_verify.add_argument("--check", required=True, choices=CHECKS + ("all",))

    p_compare = sub.add_parser("compare", help="run several configs and tabulate")
    p_compare.add_argument("--configs", required=True, nargs="+")
    p_compare.add_argument("--out", required=True, help="output CSV path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            config = parse_config(args.config)
            for path in synthesize(config, progress=print):
                print(f"wrote {path}")
            return EXIT_OK

        if args.command == "invert":
            config = parse_config(args.config)
            overrides = {}
            if args.method:
                overrides["method"] = args.method
            if args.out:
                overrides["out_dir"] = args.out
            if overrides:
                config = dataclasses.replace(config, **overrides)
            result = invert(config, progress=print)
            print(f"final misfit {result.final_misfit:.6e} after "
                  f"{len(result.steps)} iterations "
                  f"({result.wall_time:.1f} s); outputs in {config.out_dir}")
            return EXIT_OK

        if args.command == "verify":
            reports = run_all() if args.check == "all" else [run_check(args.check)]
            print(json.dumps(reports, indent=2))
            return EXIT_OK if all(r["pass"] for r in reports) else EXIT_VERIFY

        if args.command == "compare":
            configs = [parse_config(path) for path in args.configs]
            compare(configs, args.out, progress=print)
            print(f"wrote {args.out}")
            return EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
