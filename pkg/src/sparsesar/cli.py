"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, default_config, load_config
from .experiment import (
    SUMMARY_HEADER,
    run_evaluation,
    run_experiment,
    run_simulation,
    run_training,
    summarize_report,
)
from .io import write_csv

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3

log = logging.getLogger("sparsesar")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file (key = value with [sections])")
    common.add_argument("--seed", type=int, help="master seed (overrides [experiment] seed)")
    common.add_argument("--out", type=Path, help="output directory (overrides [experiment] out)")
    common.add_argument("--pattern", help="uniform | poisson | staggered | jittered | learned:PATH")
    common.add_argument("--budget", type=float, help="azimuth budget fraction in (0, 1]")
    common.add_argument("--recon", choices=["mf", "ista", "modl"], help="reconstruction method")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sparsesar", description="Sparse stripmap SAR experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write ground-truth scenes and their echoes")
    sub.add_parser("reconstruct", parents=[common], help="reconstruct at one pattern and write a report")
    sub.add_parser("train", parents=[common], help="jointly train the pattern and the denoiser")
    sub.add_parser("evaluate", parents=[common], help="compare pattern kinds across budgets")
    sub.add_parser("report", parents=[common], help="summarise an existing report.csv")
    return parser


def _apply_overrides(cfg, args) -> None:
    if args.seed is not None:
        cfg.set("experiment", "seed", args.seed)
    if args.out is not None:
        cfg.set("experiment", "out", str(args.out.resolve()))
    if args.pattern is not None:
        kind, _, path = args.pattern.partition(":")
        cfg.set("pattern", "kind", kind)
        if kind == "learned":
            if not path:
                raise ConfigError("--pattern learned needs a path: learned:PATH")
            cfg.set("pattern", "path", str(Path(path).resolve()))
        elif path:
            raise ConfigError(f"--pattern {kind} takes no path")
    if args.budget is not None:
        cfg.set("pattern", "budget", args.budget)
    if args.recon is not None:
        cfg.set("recon", "method", args.recon)
    cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if not args.config:
            cfg.validate()
        _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.path("experiment", "out"))
    try:
        if args.command == "simulate":
            paths = run_simulation(cfg, out)
            print(f"wrote {len(paths)} echoes to {out / 'echoes'}")
        elif args.command == "reconstruct":
            rows = run_experiment(cfg, out)
            _print_rows(rows)
        elif args.command == "evaluate":
            rows = run_evaluation(cfg, out)
            _print_rows(rows)
        elif args.command == "train":
            summary = run_training(cfg, out, callback=_progress)
            print(f"trained {summary['epochs']} epochs: loss {summary['initial_loss']:.4g} -> "
                  f"{summary['final_loss']:.4g}, lambda {summary['lambda']:.4g}; weights in {out / 'model.ssdw'}")
        elif args.command == "report":
            summary = summarize_report(out / "report.csv")
            write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
            print(",".join(SUMMARY_HEADER))
            for row in summary:
                print(",".join(row))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("pipeline failure", exc_info=True)
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def _progress(epoch, state, loss) -> None:
    log.info("epoch %d mean loss %.6g lambda %.4g", epoch, loss, state.lam)


def _print_rows(rows) -> None:
    failed = sum(r.status != "ok" for r in rows)
    ok = [r for r in rows if r.status == "ok"]
    if ok:
        mean_gain = sum(r.psnr_gain_db for r in ok) / len(ok)
        mean_rec = sum(r.reconstruction_psnr_db for r in ok) / len(ok)
        print(f"{len(ok)} rows ok, {failed} failed; mean reconstruction PSNR {mean_rec:.2f} dB, mean gain {mean_gain:.2f} dB")
    else:
        print(f"all {failed} rows failed")


if __name__ == "__main__":
    sys.exit(main())
