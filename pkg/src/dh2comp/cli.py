"""Command-line driver: one CSV row per configuration in the sweep."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import COLUMNS, RunConfig, compare_modes, rows_to_csv, run_experiment, sweep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dh2comp", description=__doc__)
    p.add_argument("--mesh-m", type=int, default=8, help="sphere mesh subdivision (n = 8 m^2)")
    p.add_argument("--npoints", type=int, default=None, help="use n random sphere points instead of the mesh")
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--kappa-growing", action="store_true",
                   help="scale kappa with sqrt(n / 8192) so kappa h stays fixed")
    p.add_argument("--order", type=int, nargs="+", default=[3], help="interpolation order(s) m")
    p.add_argument("--eta1", type=float, default=1.0)
    p.add_argument("--eta2", type=float, default=1.0)
    p.add_argument("--eta3", type=float, default=1.0)
    p.add_argument("--leafsize", type=int, default=32)
    p.add_argument("--eps", type=float, default=1e-4, help="recompression tolerance")
    p.add_argument("--eps-weights", type=float, nargs="+", default=[1e-5])
    p.add_argument("--knorm", type=int, default=1)
    p.add_argument("--weights", choices=["exact", "compressed"], default="exact")
    p.add_argument("--error-mode", choices=["abs", "blockrel"], default="blockrel")
    p.add_argument("--symmetric-weights", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-verify", action="store_true", help="skip error measurement")
    p.add_argument("--compare-weights", action="store_true",
                   help="run exact and compressed weights and print a side-by-side table")
    p.add_argument("--report-dir", type=Path, default=None,
                   help="write block, storage, weight and rank CSVs here")
    p.add_argument("--out", type=Path, default=None, help="CSV output (stdout if omitted)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    return RunConfig(
        mesh_m=args.mesh_m, npoints=args.npoints, kappa=args.kappa, kappa_growing=args.kappa_growing,
        order=args.order[0], eta1=args.eta1, eta2=args.eta2, eta3=args.eta3, leaf_size=args.leafsize,
        eps=args.eps, eps_weights=args.eps_weights[0], k_norm=args.knorm, weights=args.weights,
        error_mode=args.error_mode, symmetric_weights=args.symmetric_weights, seed=args.seed,
        verify=not args.no_verify,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = config_from_args(args)
        axes = {"order": args.order}
        if args.weights == "compressed":
            axes["eps_weights"] = args.eps_weights
        cfgs = sweep(base, **axes)
        for c in cfgs:
            c.validate()
        if args.compare_weights:
            rows = []
            for c in cfgs:
                rows += compare_modes(replace(c, weights="exact"), replace(c, weights="compressed"))
            text = rows_to_csv(rows, ["column", "a", "b", "diff"])
        else:
            rows = [run_experiment(c, args.report_dir) for c in cfgs]
            text = rows_to_csv(rows, COLUMNS)
    except ValueError as exc:
        print(f"dh2comp: error: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    return 0
