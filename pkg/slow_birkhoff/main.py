"""
Main entry point for slow-birkhoff.
Batch commands that construct functions with arbitrarily slow Birkhoff averages
for the dyadic odometer, verify them and trace their averages.
"""
import argparse
import logging
import sys
from typing import List, Optional

from slow_birkhoff.cli.commands import cmd_construct, cmd_trace, cmd_verify
from slow_birkhoff.utils.config import LOG_LEVELS, get_settings

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None):
    """Configure logging once per process."""
    logging.basicConfig(
        level=getattr(logging, (level or get_settings().log_level).upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout)
        ],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slow-birkhoff",
        description="Construct and verify functions whose Birkhoff averages converge arbitrarily slowly",
    )
    parser.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, default=None, help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    construct = sub.add_parser("construct", help="run a construction from a TOML config")
    construct.add_argument("--config", required=True, help="path to the run config")
    construct.add_argument("--out", default=None, help="output directory (default: config out_dir or .)")

    verify = sub.add_parser("verify", help="recheck a saved function spec")
    verify.add_argument("--spec", required=True, help="path to function_spec.json")
    verify.add_argument("--samples", type=int, default=None, help="Monte-Carlo sample count")
    verify.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed")
    verify.add_argument("--alpha", type=float, default=None, help="confidence level parameter")
    verify.add_argument("--workers", type=int, default=None, help="worker processes")
    verify.add_argument("--stage", action="append", default=None, metavar="N,a,delta",
                        help="replace the saved schedule (repeat once per stage)")
    verify.add_argument("--out", default=None, help="output directory (default: next to the spec)")

    trace = sub.add_parser("trace", help="write A(x, N, f) against N")
    trace.add_argument("--spec", required=True, help="path to function_spec.json")
    trace.add_argument("--points", type=int, default=None, help="number of sampled starting points")
    trace.add_argument("--x", action="append", default=None, help="explicit starting point, e.g. 3/2^4 or 1/2,1/4")
    trace.add_argument("--nmax", type=int, required=True, help="largest N")
    trace.add_argument("--log-spaced", action="store_true", help="only log-spaced N")
    trace.add_argument("--seed", type=int, default=0, help="seed for sampled points")
    trace.add_argument("--out", default=None, help="output directory (default: next to the spec)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    logger.info(f"Running {args.command}")

    if args.command == "construct":
        return cmd_construct(args.config, args.out)
    if args.command == "verify":
        return cmd_verify(args.spec, args.stage, args.out, samples=args.samples, seed=args.seed,
                          alpha=args.alpha, workers=args.workers)
    return cmd_trace(args.spec, points=args.points, xs=args.x, nmax=args.nmax,
                     log_spaced=args.log_spaced, seed=args.seed, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
