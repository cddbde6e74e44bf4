"""Command-line entry point ``hairhom``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .cell import build_cell_psi, psi_mean_finite_difference
from .errors import HairhomError, SolverError

log = logging.getLogger("hairhom")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


def _values(text):
    try:
        return tuple(float(v) for v in harness._parse_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot read {text!r} as a comma-separated list of numbers")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hairhom", description="Homogenised and resolved root-hair uptake models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured models and write profile.csv / summary.kv")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides [output] out)")

    s = sub.add_parser("sweep", help="run one scenario per parameter value")
    s.add_argument("--config", required=True)
    s.add_argument("--param", help="parameter to sweep, e.g. a_eps")
    s.add_argument("--values", type=_values, help="comma-separated values")
    s.add_argument("--out", help="output directory")
    s.add_argument("--workers", type=int, default=None)

    c = sub.add_parser("cell-psi", help="cell mean of psi by lattice sums, optionally cross-checked")
    c.add_argument("--modes", type=int, default=64)
    c.add_argument("--ewald-split", type=float, default=2.0)
    c.add_argument("--check", action="store_true", help="also run the finite-difference estimate")

    v = sub.add_parser("converge", help="observed orders against an analytic oracle")
    v.add_argument("--config", required=True)
    v.add_argument("--levels", type=int, default=None)
    v.add_argument("--study", choices=harness.STUDIES, default=None)
    v.add_argument("--out", help="write convergence.csv here")

    m = sub.add_parser("compare", help="recompute norms from a stored profile.csv")
    m.add_argument("--out", required=True, help="directory holding profile.csv")
    return p


def _print_kv(pairs):
    for k, v in pairs:
        print(f"{k}={harness._fmt(v)}")


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = harness.load_config(args.config)
        out = args.out or cfg.out
        report = harness.run(cfg, out)
        _print_kv(list(report.norms.items()) + list(report.flags.items()))
        if out:
            print(f"wrote {out}")
        return EXIT_OK
    if args.command == "sweep":
        cfg = harness.load_config(args.config)
        out = args.out or cfg.out
        reports = harness.run_sweep(cfg, args.param, args.values, out, args.workers)
        param = args.param or cfg.sweep_param
        for rep in reports:
            _print_kv([("run", rep.config.name)] + list(rep.flags.items()))
        if out:
            print(f"wrote {out} ({len(reports)} {param} values)")
        return EXIT_OK
    if args.command == "cell-psi":
        psi = build_cell_psi(args.modes, args.ewald_split)
        pairs = [("psi_mean", psi.mean), ("modes", psi.modes), ("ewald_split", psi.ewald_split),
                 ("error_estimate", psi.error_estimate)]
        if args.check:
            fd, levels = psi_mean_finite_difference()
            pairs += [(f"fd_N{n}", v) for n, v in levels]
            pairs += [("fd_extrapolated", fd), ("difference", abs(fd - psi.mean))]
        _print_kv(pairs)
        return EXIT_OK
    if args.command == "converge":
        cfg = harness.load_config(args.config)
        table = harness.convergence_study(cfg, args.levels, args.study)
        print(harness.convergence_text(table), end="")
        if args.out:
            harness.emit_outputs(harness.ComparisonReport(config=cfg, convergence=table), args.out)
        return EXIT_OK
    if args.command == "compare":
        norms, flags, mismatches = harness.compare(args.out)
        _print_kv(list(norms.items()) + list(flags.items()))
        for line in mismatches:
            print(f"mismatch: {line}", file=sys.stderr)
        return EXIT_INVALID if mismatches else EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HairhomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
