"""Command-line entry point.

Subcommands::

    grsd run <config> [--out DIR] [--seed N] [--threads N] [--figures]
    grsd validate <config>
    grsd list-recipes
    grsd report <run_dir> [--format png]

Environment overrides: GRSD_OUT (output directory), GRSD_THREADS.
Exit codes: 0 success, 1 runtime failure (error.json written), 2 schema
violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .errors import SchemaViolationError
from .recipes import RECIPE_NAMES, RECIPE_SCHEMAS, run_recipe, validate_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grsd",
        description="Resolution-shell transport diagnostics at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment recipe")
    p_run.add_argument("config", help="path to the experiment config file")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads for internal sweeps")
    p_run.add_argument("--figures", action="store_true",
                       help="render figures after the run")

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")

    sub.add_parser("list-recipes", help="list recipe names and parameters")

    p_rep = sub.add_parser("report", help="render figures for a finished run")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--format", default="png", choices=("png", "svg", "pdf"))
    return parser


def _cmd_run(args) -> int:
    try:
        recipe = validate_config(args.config)
    except SchemaViolationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    if args.seed is not None:
        recipe = replace(recipe, seed=args.seed)
    out = args.out or os.environ.get("GRSD_OUT") or recipe.out_dir \
        or f"runs/{recipe.name}"
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("GRSD_THREADS", "1"))
    try:
        manifest = run_recipe(recipe, out_dir=out, threads=threads)
    except SchemaViolationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"run complete: {out}")
    for art in manifest["artifacts"]:
        print(f"  {art['name']}  ({art['bytes']} bytes, sha256 {art['sha256'][:12]}...)")
    if args.figures:
        from .figures import render_run
        for fig in render_run(out, fmt="png"):
            print(f"  {fig.name}")
    return 0


def _cmd_validate(args) -> int:
    try:
        recipe = validate_config(args.config)
    except SchemaViolationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    print(f"valid: recipe {recipe.name}, seed {recipe.seed}")
    print("resolved parameters (defaults included):")
    for key in sorted(recipe.params):
        print(f"  {key} = {recipe.params[key]}")
    return 0


def _cmd_list(_args) -> int:
    for name in RECIPE_NAMES:
        print(name)
        for key, spec in sorted(RECIPE_SCHEMAS[name].items()):
            print(f"  {key} ({spec.kind}, default {spec.default!r}): {spec.help}")
    return 0


def _cmd_report(args) -> int:
    from .figures import render_run
    try:
        figures = render_run(args.run_dir, fmt=args.format)
    except FileNotFoundError as exc:
        print(f"report failed: {exc}", file=sys.stderr)
        return 1
    for fig in figures:
        print(fig)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "validate": _cmd_validate,
        "list-recipes": _cmd_list,
        "report": _cmd_report,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
