"""``riskpipe`` command line: train, predict, inspect.

Exit status 0 on success, 1 on validation or usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from riskpipe import engine
from riskpipe.config import parse_algo_config, parse_data_config, parse_predict_config, read_text
from riskpipe.errors import RiskpipeError, ValidationError
from riskpipe.persist import load_bundle

LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING, "error": logging.ERROR}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riskpipe", description="Configuration-driven training and prediction on tabular data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model and write result, bundle and log")
    t.add_argument("--data-config", required=True)
    t.add_argument("--algo-config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, help="override the data configuration seed")
    t.add_argument("--figures", action="store_true", help="also render PNG report figures")

    pr = sub.add_parser("predict", help="predict with a stored bundle")
    pr.add_argument("--predict-config", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--bundles", required=True, help="directory holding model bundles")
    pr.add_argument("--out", required=True)
    pr.add_argument("--figures", action="store_true", help="also render PNG report figures")

    i = sub.add_parser("inspect", help="summarise a stored bundle")
    i.add_argument("--model", required=True)
    return p


def _log_level() -> int:
    name = os.environ.get("RISKPIPE_LOG_LEVEL", "info").strip().lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"RISKPIPE_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}; got '{name}'")
    return LOG_LEVELS[name]


def _figures(result, stem, out):
    from riskpipe.plotting import render_figures

    for path in render_figures(result, stem, out):
        print(f"figure: {path}")


def _train(args):
    dc = parse_data_config(read_text(args.data_config))
    ac = parse_algo_config(read_text(args.algo_config))
    bundle, result = engine.run_training(dc, ac, args.data, args.out, seed=args.seed)
    stem = bundle.stem
    print(f"trained {bundle.model.spec.family} ({bundle.task}); results in {args.out}/{stem}_training.json")
    if args.figures:
        _figures(result, stem, args.out)


def _predict(args):
    pc = parse_predict_config(read_text(args.predict_config))
    preds, result = engine.run_predict_pretrained(pc, args.data, args.bundles, args.out)
    print(f"predicted {len(preds.ids)} row(s); results in {args.out}/{pc.stem}_predict.json")
    if args.figures:
        _figures(result, pc.stem, args.out)


def _inspect(args):
    print(engine.bundle_summary(load_bundle(args.model)))


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        level = _log_level()
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.getLogger("riskpipe").setLevel(level)
    try:
        {"train": _train, "predict": _predict, "inspect": _inspect}[args.command](args)
    except ValidationError as exc:
        print(f"riskpipe: invalid input: {exc}", file=sys.stderr)
        return 1
    except RiskpipeError as exc:
        where = f" [{exc.stage}]" if exc.stage else ""
        print(f"riskpipe: error{where}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ArithmeticError, ValueError) as exc:
        print(f"riskpipe: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
