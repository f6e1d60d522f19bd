"""``adbench``: run the benchmark suite and write a CSV report.

Exit status is 0 iff every gradient validation passed.
"""

import argparse
import sys

from . import bench
from .errors import ConfigError


def _parser():
    p = argparse.ArgumentParser(prog="adbench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="time engines and validate gradients")
    run.add_argument("--bench", default="all",
                     help=f"one of {', '.join(bench.CASES)}, a comma-separated list, or 'all'")
    run.add_argument("--min-exp", type=int, default=1, help="smallest size is 2^min-exp")
    run.add_argument("--max-exp", type=int, default=14, help="largest size is 2^max-exp")
    run.add_argument("--iters", type=int, default=None,
                     help="timed evaluations per engine and size (default: enough for 0.1 s)")
    run.add_argument("--warmup", type=int, default=10)
    run.add_argument("--seed", type=int, default=0, help="input generator seed (unsigned 64-bit)")
    run.add_argument("--out", required=True, help="CSV output path")
    return p


def _cases(selection):
    if selection == "all":
        return list(bench.CASES)
    names = [s.strip() for s in selection.split(",") if s.strip()]
    unknown = [s for s in names if s not in bench.CASES]
    if unknown or not names:
        raise ConfigError(f"unknown benchmark {', '.join(unknown) or selection!r}; "
                          f"choose from {', '.join(bench.CASES)} or 'all'")
    return names


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cases = _cases(args.bench)
        if args.min_exp < 1 or args.max_exp < args.min_exp:
            raise ConfigError("need 1 <= --min-exp <= --max-exp")
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        rows, failures = bench.run_all(cases, range(args.min_exp, args.max_exp + 1),
                                       iters=args.iters, warmup=args.warmup,
                                       seed=args.seed, log=sys.stderr)
    except ConfigError as exc:
        print(f"adbench: error: {exc}", file=sys.stderr)
        return 2
    if rows:
        try:
            bench.emit_report(rows, args.out)
        except OSError as exc:
            print(f"adbench: cannot write {args.out}: {exc}", file=sys.stderr)
            return 2
    else:
        print("adbench: no rows passed validation; no report written", file=sys.stderr)
    print(f"adbench: {len(rows)} rows, {len(failures)} failed validations", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
