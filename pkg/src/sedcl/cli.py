"""Command line entry point.

Subcommands: synth, featurize, train, evaluate, compare, report.  Every
subcommand accepts --config PATH, --seed N and --out DIR; --seed and
--out override the corresponding config values.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import runner
from .config import ExperimentConfig, load_config
from .errors import (
    AnnotationError,
    ConfigError,
    DataError,
    NumericalError,
    SedclError,
    ShapeError,
)
from .synth import generate_corpus


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; route them through the
    # config-error path instead so the documented exit codes hold.
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    common.add_argument("--out", metavar="DIR", help="output directory")

    parser = _Parser(prog="sedcl", description="Scene-aware sound event detection experiments.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                                parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    sub.add_parser("featurize", parents=[common], help="write per-clip feature files")
    sub.add_parser("train", parents=[common], help="train one model")
    ev = sub.add_parser("evaluate", parents=[common], help="score a saved checkpoint")
    ev.add_argument("--checkpoint", metavar="PATH", help="model file (default: <out>/checkpoint.bin)")
    ev.add_argument("--split", choices=("train", "eval"), default="eval")
    ev.add_argument("--threshold", type=float, help="decision threshold override")
    sub.add_parser("compare", parents=[common], help="run every objective variant and tabulate")
    sub.add_parser("report", parents=[common], help="print the reports in an output directory")
    return parser


def _need(value: str, what: str) -> str:
    if not value:
        raise ConfigError(f"{what} is not set; add it to the config or pass --out")
    return value


def _cmd_synth(args, cfg: ExperimentConfig) -> int:
    root = args.out or cfg.corpus
    if not root:
        raise ConfigError("synth needs a destination: pass --out or set corpus in the config")
    spec = cfg.synth
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    corpus = generate_corpus(spec, root)
    print(
        f"wrote {len(corpus.train)} train + {len(corpus.eval)} eval clips, "
        f"{len(spec.vocabulary)} event classes -> {root}"
    )
    return 0


def _cmd_featurize(args, cfg: ExperimentConfig) -> int:
    out = _need(cfg.out, "output directory")
    count = runner.featurize(cfg.corpus, out, cfg.model.n_mels)
    print(f"wrote {count} feature files -> {os.path.join(out, 'features')}")
    return 0


def _cmd_train(args, cfg: ExperimentConfig) -> int:
    out = _need(cfg.out, "output directory")
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    fit, reports = runner.run_train(cfg, seed, out)
    first, last = fit.epochs[0], fit.epochs[-1]
    print(f"objective {cfg.objective}, seed {seed}: "
          f"loss {first[2]:.4f} (epoch {first[0]}) -> {last[2]:.4f} (epoch {last[0]})")
    for name in sorted(reports):
        rep = reports[name]
        print(f"  {name}: micro F {rep.micro_f:.4f}  ER {rep.micro_er:.4f}")
    print(f"artifacts -> {out}")
    return 0


def _cmd_evaluate(args, cfg: ExperimentConfig) -> int:
    checkpoint = args.checkpoint or os.path.join(_need(cfg.out, "output directory"),
                                                 "checkpoint.bin")
    threshold = args.threshold if args.threshold is not None else cfg.threshold
    report = runner.run_evaluate(checkpoint, cfg.corpus, args.split, threshold,
                                 out_dir=cfg.out or None)
    print(f"{args.split}: micro F {report.micro_f:.4f}  macro F {report.macro_f:.4f}  "
          f"micro ER {report.micro_er:.4f}  macro ER {report.macro_er:.4f}")
    return 0


def _format_compare_rows(rows: list) -> list:
    lines = []
    for row in rows:
        variant, runs = row[0], row[1]
        cells = row[2:10]
        status = row[10]
        if cells[0] == "":
            lines.append(f"{variant:<16} no successful runs  [{status}]")
            continue
        micro_f, micro_f_sd, _, _, micro_er, micro_er_sd, _, _ = cells
        note = "" if status == "ok" else f"  [{status}]"
        lines.append(
            f"{variant:<16} runs {runs}:  micro F {micro_f:.4f} +/- {micro_f_sd:.4f}   "
            f"micro ER {micro_er:.4f} +/- {micro_er_sd:.4f}{note}"
        )
    return lines


def _cmd_compare(args, cfg: ExperimentConfig) -> int:
    out = _need(cfg.out, "output directory")
    rows, ok = runner.run_compare(cfg, out)
    for line in _format_compare_rows(rows):
        print(line)
    print(f"table -> {os.path.join(out, 'compare.csv')}")
    return 0 if ok else 1


def _print_report_doc(doc: dict):
    if "micro_f" in doc:
        doc = {"": doc}
    for name in sorted(doc):
        rep = doc[name]
        prefix = f"{name}: " if name else ""
        print(f"{prefix}micro F {rep['micro_f']:.4f}  macro F {rep['macro_f']:.4f}  "
              f"micro ER {rep['micro_er']:.4f}  macro ER {rep['macro_er']:.4f}")


def _cmd_report(args, cfg: ExperimentConfig) -> int:
    out = _need(cfg.out, "output directory")
    compare_path = os.path.join(out, "compare.csv")
    metrics_path = os.path.join(out, "metrics.json")
    if os.path.isfile(compare_path):
        with open(compare_path, encoding="utf-8", newline="") as fh:
            table = list(csv.reader(fh))
        rows = []
        for raw in table[1:]:
            row = [raw[0], raw[1]]
            row += [float(c) if c else "" for c in raw[2:10]]
            row.append(raw[10])
            rows.append(row)
        for line in _format_compare_rows(rows):
            print(line)
        return 0
    if os.path.isfile(metrics_path):
        with open(metrics_path, encoding="utf-8") as fh:
            _print_report_doc(json.load(fh))
        return 0
    raise DataError(f"nothing to report: no compare.csv or metrics.json under {out}")


_COMMANDS = {
    "synth": _cmd_synth,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.out:
            cfg.out = args.out
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"sedcl: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"sedcl: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (AnnotationError, DataError, ShapeError) as exc:
        print(f"sedcl: data error: {exc}", file=sys.stderr)
        return 2
    except SedclError as exc:
        print(f"sedcl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
