"""Command-line front end.

Subcommands run the seeded experiment pipelines from config files, plus two
standalone utilities: `merge` (reverse merge of two checkpoint files) and
`align` (alignment report from two gradient vectors stored as checkpoints).

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import experiments
from .core import ResultTable
from .io import (
    CheckpointFormatError,
    ConfigError,
    load_config,
    read_checkpoint,
    write_checkpoint,
)
from .neon import AlignmentReport, alignment, neon_merge

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_EXPERIMENTS = {
    "fig2-grid": (experiments.FIG2_SCHEMA, experiments.cmd_fig2_grid),
    "toy-exp1": (experiments.EXP1_SCHEMA, experiments.cmd_toy_exp1),
    "toy-exp2": (experiments.EXP2_SCHEMA, experiments.cmd_toy_exp2),
    "ar-verify": (experiments.ARV_SCHEMA, experiments.cmd_ar_verify),
    "transfer": (experiments.TRANSFER_SCHEMA, experiments.cmd_transfer),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neonlab",
        description="Reverse-merge (negative extrapolation) experiments on toy generative models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="key=value config file", default=None)
        p.add_argument("--out-dir", help="output directory (overrides config)", default=None)
        p.add_argument("--seed", type=int, help="seed (overrides config)", default=None)

    p = sub.add_parser("merge", help="reverse-merge two checkpoint files")
    p.add_argument("--base", required=True, help="theta_r checkpoint path")
    p.add_argument("--degraded", required=True, help="theta_s checkpoint path")
    p.add_argument("-w", "--weight", type=float, required=True)
    p.add_argument("--out", required=True, help="output checkpoint path")

    p = sub.add_parser("align", help="alignment report from two gradient vectors")
    p.add_argument("--rd", required=True, help="real-data gradient (checkpoint file)")
    p.add_argument("--rs", required=True, help="synthetic gradient (checkpoint file)")
    p.add_argument("--precond", default=None, help="diagonal preconditioner (checkpoint file); identity if omitted")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--z", type=float, default=float("nan"), help="quadratic coefficient; w* is nan unless z > 0")
    p.add_argument("--out", required=True, help="output CSV path")
    return parser


def _load_experiment_config(args, schema: dict) -> dict:
    cfg = dict(schema)
    if args.config is not None:
        cfg = load_config(args.config, schema)
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _cmd_merge(args) -> int:
    theta_r = read_checkpoint(args.base)
    theta_s = read_checkpoint(args.degraded)
    merged = neon_merge(theta_r, theta_s, args.weight)
    write_checkpoint(args.out, merged)
    print(f"wrote {args.out} (w={args.weight:g}, dim={merged.dim})")
    return EXIT_OK


def _cmd_align(args) -> int:
    r_d = read_checkpoint(args.rd).params
    r_s = read_checkpoint(args.rs).params
    if args.precond is not None:
        precond = read_checkpoint(args.precond).params
    else:
        precond = np.ones_like(r_d)
    z = args.z if np.isfinite(args.z) else -1.0  # sentinel: w* stays nan
    rep = alignment(r_d, r_s, precond, alpha=args.alpha, z=z)
    table = ResultTable(columns=list(AlignmentReport.CSV_COLUMNS))
    table.add_row(*rep.csv_row())
    table.write_csv(args.out)
    print(f"s={rep.s:.6g} cos_sim={rep.cos_sim:.6g} w_star={rep.w_star:.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "merge":
            return _cmd_merge(args)
        if args.command == "align":
            return _cmd_align(args)
        schema, fn = _EXPERIMENTS[args.command]
        cfg = _load_experiment_config(args, schema)
        paths = fn(cfg)
        for p in paths:
            print(f"wrote {p}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CheckpointFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
