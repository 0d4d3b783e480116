"""Command-line entry point.

Subcommands:

* ``kb run CONFIG [--set key=value ...] [--out DIR]``: run an experiment,
  writing one CSV plus a JSON manifest.  Exit 0 on success, 1 on config
  errors, 2 on numeric failures.
* ``kb validate CONFIG``: report schema problems without computing.
* ``kb list-experiments``: show the available experiment kinds.

``KB_THREADS`` caps replicate-level parallelism; outputs are byte-identical
for any thread count.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .config import (
    EXPERIMENT_KINDS,
    apply_overrides,
    config_hash,
    load_config,
    validate_config,
)
from .errors import ConfigError, NumericError
from .experiments import run_experiment


def _format_x(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, experiment, cfg_hash, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["experiment", "config_hash", "replicate", "series", "x",
             "metric", "value"]
        )
        for row in rows:
            writer.writerow(
                [
                    experiment,
                    cfg_hash,
                    row["replicate"],
                    row["series"],
                    _format_x(row["x"]),
                    row["metric"],
                    repr(float(row["value"])),
                ]
            )


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args.set or [])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    errors = validate_config(cfg)
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 1
    cfg_hash = config_hash(cfg)
    out_dir = Path(args.out or cfg.get("output", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        rows = run_experiment(cfg)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    kind = cfg["experiment"].replace("-", "_")
    csv_path = out_dir / f"{kind}_{cfg_hash}.csv"
    manifest_path = out_dir / f"{kind}_{cfg_hash}_manifest.json"
    _write_csv(csv_path, cfg["experiment"], cfg_hash, rows)
    manifest = {
        "config": cfg,
        "config_hash": cfg_hash,
        "package_version": __version__,
        "csv": csv_path.name,
        "rows": len(rows),
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(csv_path)
    print(manifest_path)
    return 0


def _cmd_validate(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    errors = validate_config(cfg)
    if errors:
        for err in errors:
            print(err)
        return 1
    print("ok")
    return 0


def _cmd_list(_args):
    for kind in sorted(EXPERIMENT_KINDS):
        print(f"{kind}: {EXPERIMENT_KINDS[kind]}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kb", description="kernel Bayesian inference experiments"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config field (dotted paths allowed)",
    )
    p_run.add_argument("--out", help="output directory (default: config 'output')")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_list = sub.add_parser("list-experiments", help="list experiment kinds")
    p_list.set_defaults(func=_cmd_list)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
