"""Command line entry points: train, suite, summarize, flops."""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from .config import load_experiments, load_single_experiment
from .errors import TrainingDiverged, UsageError
from .harness import run_experiment, run_suite, summarize
from .metrics import FlopsConfig, count_flops


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contextrl",
        description="Context-divided deep Q-learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one experiment config")
    train.add_argument("--config", required=True, help="experiment file")
    train.add_argument("--seed", type=int, default=None,
                       help="run only this seed instead of the config's list")
    train.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="config override, repeatable")
    train.add_argument("--jobs", type=int, default=1,
                       help="parallel seed workers")

    suite = sub.add_parser("suite", help="run every experiment in a file")
    suite.add_argument("--file", required=True, help="suite config file")
    suite.add_argument("--jobs", type=int, default=1,
                       help="parallel seed workers")
    suite.add_argument("--out", default=None,
                       help="directory for the combined summary")

    summ = sub.add_parser("summarize", help="aggregate finished run dirs")
    summ.add_argument("--dir", required=True,
                      help="experiment directory or ancestor")

    flops = sub.add_parser("flops", help="training cost model")
    flops.add_argument("--config", required=True,
                       help="file with b, T, I, k, E, M keys")
    return parser


def _load_flops_config(path) -> FlopsConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    text = path.read_text()
    try:
        parser.read_string(text, source=str(path))
        sections = parser.sections()
        entries = dict(parser.items(sections[0])) if sections else {}
    except configparser.MissingSectionHeaderError:
        parser.read_string(f"[flops]\n{text}", source=str(path))
        entries = dict(parser.items("flops"))
    mapping = {"b": "b", "t": "t_total", "i": "i_updates", "k": "k",
               "e": "e_trunk", "m": "m_head"}
    kwargs = {}
    for key, raw in entries.items():
        field = mapping.get(key.lower())
        if field is None:
            raise UsageError(f"unknown flops key {key!r}, expected b,T,I,k,E,M")
        try:
            kwargs[field] = float(raw)
        except ValueError:
            raise UsageError(f"bad value {raw!r} for flops key {key!r}") from None
    missing = set(mapping.values()) - set(kwargs)
    if missing:
        raise UsageError(f"flops config is missing {sorted(missing)}")
    return FlopsConfig(**kwargs)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = load_single_experiment(args.config, args.override, args.seed)
            out = run_experiment(cfg, jobs=args.jobs)
            print(f"experiment {cfg.name} finished, outputs in {out}")
        elif args.command == "suite":
            configs = load_experiments(args.file)
            root = run_suite(configs, root=args.out, jobs=args.jobs)
            print(f"suite of {len(configs)} experiments finished, "
                  f"summary in {root}")
        elif args.command == "summarize":
            rows = summarize(args.dir)
            for row in rows:
                print(f"{row['experiment']:32s} {row['env']:14s} "
                      f"{row['variant']:14s} final {row['final_mean']:8.2f} "
                      f"+- {row['final_std']:.2f}  "
                      f"deterioration {row['max_deterioration_ratio']:.3f}")
        elif args.command == "flops":
            cfg = _load_flops_config(args.config)
            print(f"{count_flops(cfg):.6e}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
