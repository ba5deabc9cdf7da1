"""Command-line entry point: ``simulate``, ``sweep`` and ``validate``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SCALES, SCHEME_IDS, load_config, preset, seed_from_env
from .harness import emit_results, mean_rates, run_sweep, simulate
from .validation import run_all


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thz-hybrid",
        description="Wideband THz multi-carrier hybrid beamforming simulator.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--output", type=Path, help="CSV output path (a *_plot.py script is written alongside)")
    common.add_argument("--seed", type=_u64, help="master seed (overrides SEED and the config file)")
    common.add_argument("--scale", choices=SCALES, default="desk",
                        help="base parameter set before the config file is applied "
                             "(full and paper both select the full-size defaults)")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="run all schemes at one operating point")
    sim.add_argument("--schemes", default=",".join(SCHEME_IDS),
                     help="comma-separated scheme ids")
    sub.add_parser("sweep", parents=[common], help="run the sweep described in the config file")
    val = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    val.add_argument("--realizations", type=int, default=100,
                     help="realizations for the ordering check")
    return parser


def _resolve(args):
    cfg = preset(args.scale)
    spec = None
    if args.config is not None:
        cfg, spec = load_config(args.config, cfg)
    seed = args.seed if args.seed is not None else seed_from_env(cfg.master_seed)
    return cfg.replace(master_seed=seed), spec


def _write(rows, output):
    if output is None:
        sys.stdout.write("(no --output given; summary only)\n")
    else:
        csv_path, script = emit_results(rows, output)
        sys.stdout.write(f"wrote {csv_path} and {script}\n")
    for (scheme, value), rate in sorted(mean_rates(rows).items()):
        sys.stdout.write(f"{scheme:22s} {value:10g}  mean rate {rate / 1e9:.4f} Gbit/s\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, spec = _resolve(args)
        if args.command == "simulate":
            schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
            _write(simulate(cfg, schemes, args.workers), args.output)
        elif args.command == "sweep":
            if spec is None:
                raise ValueError("sweep needs sweep_variable and sweep_values in --config")
            _write(run_sweep(spec, cfg, args.workers), args.output)
        else:
            results = run_all(n_realizations=args.realizations, seed=cfg.master_seed)
            for r in results:
                sys.stdout.write(r.line() + "\n")
            failed = [r.number for r in results if not r.passed]
            sys.stdout.write(f"{len(results) - len(failed)}/{len(results)} checks passed\n")
            return 1 if failed else 0
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
