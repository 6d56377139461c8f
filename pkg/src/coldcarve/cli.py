"""Command line: ``coldcarve {train,attack,correct,evaluate,report}``.

Exit codes: 0 success, 1 pipeline failure (carving, correction),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment as ex
from .errors import ColdCarveError, ConfigError, EmptyResults, NotFound, SchemaError, Unrepairable

log = logging.getLogger("coldcarve")


def _globals(default) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with suppressed defaults, so a flag
    # given before the subcommand is not reset by the subparser
    g = argparse.ArgumentParser(add_help=False, argument_default=default)
    g.add_argument("--config", help="JSON experiment config")
    g.add_argument("--seed", type=int, help="base seed (overrides the config)")
    g.add_argument("--out", help="experiment directory (overrides the config)")
    g.add_argument("-v", "--verbose", action="store_true")
    return g


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coldcarve", parents=[_globals(None)],
                                description="Cold-boot model recovery experiments.")
    common = _globals(argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train the victim model")
    a = sub.add_parser("attack", parents=[common], help="dump, decay and recover the model")
    a.add_argument("--trials", type=int, help="number of decayed dumps")
    a.add_argument("--parallel", action="store_true", help="decay trials in worker processes")
    a.add_argument("--vote", action="store_true", help="majority-vote the trials")
    a.add_argument("--rho0", type=float)
    a.add_argument("--rho1", type=float)
    a.add_argument("--correlation", choices=["Independent", "FixedPositions"])
    c = sub.add_parser("correct", parents=[common], help="distil or retrain the recovered model")
    c.add_argument("--mode", choices=["D1", "D2", "retrain"])
    c.add_argument("--rate", type=float, help="gradient dropout rate for D2")
    c.add_argument("--fraction", type=float, help="recovery set size as a fraction of the training set")
    sub.add_parser("evaluate", parents=[common], help="score recovered/corrected models")
    r = sub.add_parser("report", parents=[common], help="aggregate result rows into tables")
    r.add_argument("results", nargs="+", help="directories searched for results.csv")
    return p


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    raw = cfg.to_dict()
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    for key, section, field in (("trials", "decay", "trials"), ("rho0", "decay", "rho0"),
                                ("rho1", "decay", "rho1"), ("correlation", "decay", "correlation"),
                                ("mode", "correct", "mode"), ("rate", "correct", "rate"),
                                ("fraction", "correct", "fraction")):
        value = getattr(args, key, None)
        if value is not None:
            raw[section][field] = value
    if getattr(args, "vote", False):
        raw["decay"]["vote"] = True
    return ex.ExperimentConfig.from_dict(raw)


def run(args) -> int:
    if args.command == "report":
        out = args.out or "report"
        written = ex.stage_report(args.results, out)
        for name, path in written.items():
            print(f"{name}\t{path}")
        return 0
    cfg = _config(args)
    if args.command == "train":
        res = ex.stage_train(cfg)
        print(f"test accuracy {res['test_accuracy']:.4f}")
    elif args.command == "attack":
        res = ex.stage_attack(cfg, parallel=args.parallel)
        print(json.dumps({k: v for k, v in res.items() if k != "correlation_matrix"}, sort_keys=True))
    elif args.command == "correct":
        res = ex.stage_correct(cfg)
        print(f"{res['mode']}\tEpochs/RAD\t{res['epochs']}/{res['rad_after']:.4f}"
              f"\t(before {res['rad_before']:.4f})")
    elif args.command == "evaluate":
        rows = ex.stage_evaluate(cfg)
        from .metrics import format_table
        print(format_table(rows, ["stage", "rad", "fidelity", "weight_value_error_rate"]), end="")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, EmptyResults, SchemaError) as exc:
        print(f"coldcarve: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"coldcarve: error: {exc}", file=sys.stderr)
        return 2
    except (NotFound, Unrepairable, ColdCarveError) as exc:
        print(f"coldcarve: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
