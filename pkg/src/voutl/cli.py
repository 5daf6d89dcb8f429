"""Command line entry point: ``voutl run|compare|verify``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness

log = logging.getLogger("voutl")


def _cmd_run(args) -> int:
    try:
        spec = harness.load_spec(args.config)
        if args.seeds:
            spec.seeds = harness.parse_list(args.seeds, int)
        cells = spec.cells()
    except (harness.SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    log.info("%s: %d cells x %d seeds", spec.name, len(cells), len(spec.seeds))

    def progress(done, total, s):
        log.info("[%d/%d] %s lam=%g t_pr=%d loops=%d seed=%d", done, total, s.cell.label,
                 s.cell.policy.lam, s.cell.policy.t_pr, s.cell.loops, s.seed)

    try:
        out = harness.run_experiment(spec, args.out, workers=args.workers, progress=progress)
    except (harness.SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


def _cmd_compare(args) -> int:
    try:
        rows = harness.read_aggregate(args.input)
        cmp = harness.compare_policies(rows, args.a, args.b)
    except (KeyError, harness.SpecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for tag, row in (("a", cmp.best_a), ("b", cmp.best_b)):
        print(f"{tag}: {row.policy} best lambda={row.lam:g} t_pr={row.t_pr} "
              f"mean={row.mean:.6g} ci=[{row.ci_lo:.6g}, {row.ci_hi:.6g}]")
    print(f"improvement={100 * cmp.improvement:.2f}% ci_disjoint={cmp.ci_disjoint}")
    return 0


def _cmd_verify(args) -> int:
    try:
        problems = harness.verify(args.input)
    except (harness.SpecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in problems:
        print(p)
    print("ok" if not problems else f"{len(problems)} mismatches")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voutl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", help="comma separated seeds, ranges like 0-9 allowed")
    p.add_argument("--out", help="output directory (overrides RESULT_DIR and the config)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="compare two policies at their best lambda")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify", help="recompute aggregate.csv from the raw files")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
