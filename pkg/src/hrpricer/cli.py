"""Command line entry point: ``hrpricer <command> --config <path>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError, HRPricerError, failing_module
from .harness import COMMANDS, METHODS, parse_config, run

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _u64(text):
    val = int(text, 0)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hrpricer", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON model/run configuration")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=_u64, default=None)
    p.add_argument("--method", choices=METHODS, default=None, help="pricer for 'price'")
    p.add_argument("--sigma", default=None,
                   help="volatility for --method crr: lo, hi or a number")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            text = fh.read()
        doc = json.loads(text) if text.strip() else None
        cfg = parse_config(doc, args.command, out=args.out, seed=args.seed,
                           method=args.method, sigma=args.sigma)
    except (OSError, json.JSONDecodeError, ConfigurationError) as exc:
        print(f"hrpricer: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except ConfigurationError as exc:
        print(f"hrpricer: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HRPricerError as exc:
        module = failing_module(exc)
        print(f"hrpricer: numerical failure ({type(exc).__name__}, raised in {module}): {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
