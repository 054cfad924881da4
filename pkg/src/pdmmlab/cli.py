"""``pdmmlab <fig1|fig2|fig3|bound|run> --config PATH [--seed N] [--out DIR]``

Exit status: 0 on success, 1 on configuration errors, 2 when a variance
bound check fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import __version__
from .config import ConfigError, load_config, validate
from .experiments import COMMANDS
from .report import write_table

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdmmlab", description="PDMM subspace-perturbation privacy experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--jobs", type=int, default=None, help="worker threads for ensembles")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg.output.dir = args.out
        if args.jobs is not None:
            cfg.output.jobs = args.jobs
        validate(cfg)
        outcome = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"pdmmlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    preamble = [
        ("tool", f"pdmmlab {__version__}"),
        ("command", args.command),
        ("experiment", cfg.experiment_id),
        ("config_sha256", cfg.digest()),
        ("master_seed", cfg.seed),
    ]
    for table in outcome.tables:
        path = write_table(table, cfg.output.dir, args.command, preamble)
        print(f"wrote {path}")
    for note in outcome.notes:
        stream = sys.stderr if note.startswith("warning") else sys.stdout
        print(note, file=stream)
    return EXIT_OK if outcome.ok else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
