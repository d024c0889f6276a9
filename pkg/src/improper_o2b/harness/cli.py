"""Command-line entry point.

Subcommands: ``run <config>``, ``suite lemmas``, ``suite acceptance``,
``emit-bounds <params>``. Exit codes: 0 success, 2 configuration error,
3 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import tomli

from ..analysis import BoundParams, bound_discrete, bound_glm, bound_linreg, vaw_regret_bound
from ..losses import DomainError
from ..posterior import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="improper-o2b", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (replication i uses seed + i)")
    common.add_argument("--reps", type=int, default=None, help="override the replication count")
    common.add_argument("--out", default=None, help="output directory for CSV/JSON")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run an experiment from a TOML config")
    r.add_argument("config")
    s = sub.add_parser("suite", parents=[common], help="run a verification suite")
    s.add_argument("which", choices=["lemmas", "acceptance"])
    e = sub.add_parser("emit-bounds", parents=[common], help="print bound values for a TOML parameter file")
    e.add_argument("params")
    return p


def _cmd_run(args) -> int:
    from .config import load_config
    from .experiment import run_experiment

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.reps is not None:
        cfg = replace(cfg, replications=args.reps)
    res = run_experiment(cfg, workers=args.workers, out=args.out)
    print(json.dumps(res.summary, indent=2, default=float))
    return EXIT_OK


def _cmd_suite(args) -> int:
    from .acceptance import criterion_clip_smoothing, criterion_lemma1, run_acceptance

    seed = 0 if args.seed is None else args.seed
    if args.which == "lemmas":
        results = [criterion_lemma1(seed), criterion_clip_smoothing(seed)]
        for r in results:
            print(r.line())
    else:
        results = run_acceptance(seed, workers=args.workers, out=args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


def emit_bounds(params: dict) -> dict:
    """Evaluate every bound whose parameters are present."""
    bp = BoundParams(**{k: v for k, v in params.items() if k in BoundParams.__dataclass_fields__})
    out = {}
    if bp.T > 4 * bp.d:
        out["discrete"] = bound_discrete(bp.d, bp.T, bp.delta)
    if None not in (bp.kappa, bp.r, bp.b, bp.m):
        out["glm"] = bound_glm(bp)
    if None not in (bp.l, bp.r, bp.b):
        out["linreg_ewa"] = bound_linreg(bp, "ewa-clipped")
        out["linreg_vaw"] = bound_linreg(bp, "vaw-clipped")
        out["vaw_regret"] = vaw_regret_bound(bp.l, bp.d, bp.T, bp.b, bp.r)
    return out


def _cmd_emit(args) -> int:
    with open(args.params, "rb") as fh:
        params = tomli.load(fh)
    print(json.dumps(emit_bounds(params), indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "suite":
            return _cmd_suite(args)
        return _cmd_emit(args)
    except (ConfigurationError, DomainError, FileNotFoundError, tomli.TOMLDecodeError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
