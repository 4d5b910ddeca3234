"""Command-line entry point.

Subcommands ``forward``, ``sample``, ``image`` and ``invert`` run the
pipeline up to that stage; ``experiment`` runs it completely unless
``--stage`` says otherwise; ``table`` sweeps a preset table.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""

import argparse
import logging
import sys

from .config import PRESETS, ConfigError, load_config
from .pipeline import STAGES, TABLES, StageError, run_experiment, run_table


def build_parser():
    parser = argparse.ArgumentParser(prog="coinversion", description="Joint obstacle and source reconstruction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "experiment"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value or JSON config file")
        p.add_argument("--preset", help="compiled-in experiment preset")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="run", help="output directory")
        p.add_argument("--data", help="measurement CSV to use instead of synthetic data")
        if name == "experiment":
            p.add_argument("--stage", choices=STAGES, default="invert")
    t = sub.add_parser("table")
    t.add_argument("--preset", required=True, choices=TABLES)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", default="tables")
    t.add_argument("--jobs", type=int, default=1)
    sub.add_parser("presets", help="list experiment presets")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "presets":
        print("\n".join(PRESETS))
        return 0
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.command == "table":
        path = run_table(args.preset, args.out, overrides, args.jobs)
        print(path.read_text(), end="")
        return 0

    try:
        config = load_config(args.config, args.preset, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    stage = getattr(args, "stage", None) or (args.command if args.command in STAGES else "invert")
    try:
        art = run_experiment(config, args.out, stage, args.data)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = art.summary
    if "errors" in summary:
        e = summary["errors"]
        print(f"E_D = {100 * e['E_D']:.2f}%  max source error = {e['max_source_error']:.4f}")
    elif "dsm_sources" in summary:
        for j, z in enumerate(summary["dsm_sources"], 1):
            print(f"z~_{j} = ({z[0]:.3f}, {z[1]:.3f})")
    print(f"artifacts in {art.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
