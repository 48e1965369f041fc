"""Command line entry point: ``pshlab run`` and ``pshlab validate``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for a
configuration error (unreadable JSON, schema violation or a semantic problem
found while building the experiment).  ``report.json`` is written for every
``run``, including failed ones, as long as the output directory is writable.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from importlib import resources

import jsonschema

from . import __version__
from .errors import ConfigError
from .experiments import execute, prepare
from .report import Report, emit_plot_data, write_report

log = logging.getLogger("pshlab")

DEFAULT_OUT = "pshlab_out"


def load_schema():
    return json.loads(resources.files("pshlab").joinpath("schema/config.schema.json").read_text())


def load_config(path):
    """Parse and schema-check a config file; every failure becomes a ConfigError."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{where}: {_short(e)}")
        raise ConfigError(f"{path}: " + "; ".join(msgs))
    return cfg


def _short(err):
    # oneOf failures carry the useful message in the closest sub-error
    if err.context:
        best = min(err.context, key=lambda e: (len(e.absolute_path) * -1, e.message))
        return best.message
    return err.message


def resolve_out_dir(args_out, cfg):
    return os.environ.get("PSHLAB_OUT") or args_out or (cfg or {}).get("output", {}).get("dir") or DEFAULT_OUT


def cmd_validate(args):
    try:
        cfg = load_config(args.config)
        prepare(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.config}: ok ({cfg['experiment']})")
    return 0


def cmd_run(args):
    t0 = time.perf_counter()
    cfg, prep = None, None
    errors = []
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        prep = prepare(cfg)
    except ConfigError as exc:
        errors.append(str(exc))
    seed = (cfg or {}).get("seed", 0) if args.seed is None else args.seed
    rep = Report(config=cfg if cfg is not None else {"path": args.config}, seed=seed, errors=errors)
    out = resolve_out_dir(args.out, cfg)
    os.makedirs(out, exist_ok=True)
    t1 = time.perf_counter()
    if not errors:
        try:
            execute(prep, cfg, rep, jobs=args.jobs)
        except ConfigError as exc:
            rep.errors.append(str(exc))
        except Exception as exc:  # keep the report: a crash is a failed run, not a lost one
            log.exception("experiment %s raised", cfg["experiment"])
            rep.check(f"experiment completed without error ({type(exc).__name__})", False, str(exc), None)
    t2 = time.perf_counter()
    rep.files = [os.path.basename(p) for p in emit_plot_data(rep, out)]
    figures = args.figures or bool((cfg or {}).get("output", {}).get("figures", False))
    if figures and not rep.errors:
        try:
            from .plotting import render_figures
            rep.files += [os.path.basename(p) for p in render_figures(rep, out)]
        except Exception as exc:  # figures are a convenience; the report must still be written
            log.exception("figure rendering failed")
            rep.notes.append(f"figure rendering failed: {exc!r}")
    rep.runtime = {"prepare_s": t1 - t0, "execute_s": t2 - t1, "total_s": time.perf_counter() - t0,
                   "jobs": args.jobs, "python": platform.python_version(), "pshlab": __version__}
    write_report(rep, out)
    for c in rep.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  (value={c['value']}, tol={c['tolerance']})")
    for e in rep.errors:
        print(f"config error: {e}", file=sys.stderr)
    print(f"status: {rep.status}; report written to {os.path.join(out, 'report.json')}")
    return rep.exit_code


def build_parser():
    ap = argparse.ArgumentParser(prog="pshlab", description="Toric and atomic psh convergence laboratory")
    ap.add_argument("--version", action="version", version=f"pshlab {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (the PSHLAB_OUT environment variable takes precedence)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for parallel experiments")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSV files")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
