"""Command-line entry point: ``vrd-diagnose <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .data_model import validate_all
from .diagnosis import ErrorType
from .evaluation import EvaluationError, default_jobs
from .fixtures import InfeasibleSpec, InjectionSpec, generate_dataset, perturb, write_fixture
from .ingestion import DATASET_NAMES, IngestionError, load_ground_truth, load_predictions
from .report import ConfigError, RunConfig, run_bias, run_diagnosis, run_evaluate

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_FINDINGS = 5

log = logging.getLogger("vrd_diagnose")


def _common(p: argparse.ArgumentParser, predictions: bool = True) -> None:
    p.add_argument("--groundtruth", required=True, help="evaluation-split annotation directory or file")
    if predictions:
        p.add_argument("--predictions", required=True, help="prediction JSON file")
    p.add_argument("--dataset", choices=DATASET_NAMES, default="custom")
    p.add_argument("--split", default="eval")
    p.add_argument("--out", default="vrd_report", help="output directory")
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.add_argument("--timestamp", action="store_true", help="stamp reports with the generation time")


def _matching(p: argparse.ArgumentParser) -> None:
    p.add_argument("--top-k", type=int, default=200)
    p.add_argument("--viou-threshold", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrd-diagnose", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="compute mAP and per-video AP")
    _common(p)
    _matching(p)

    p = sub.add_parser("diagnose", help="full error diagnosis report")
    _common(p)
    _matching(p)
    p.add_argument("--train-groundtruth", help="training-split annotations (counts and bias)")
    p.add_argument("--count-source", choices=("train", "eval"), default="train")
    p.add_argument("--bias-mode", choices=("factored", "joint"), default="factored")
    p.add_argument("--taxonomy", help="'vidor', 'vidvrd', or a directory with objects.csv/predicates.csv")
    p.add_argument("--default-fps", type=float, help="fps for videos whose annotation lacks one")
    p.add_argument("--background-threshold", type=float, default=0.1)
    p.add_argument("--charts", action="store_true", help="also render SVG charts")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bias", help="predicate-from-labels bias and co-occurrence")
    _common(p, predictions=False)
    p.add_argument("--train-groundtruth", required=True)
    p.add_argument("--bias-mode", choices=("factored", "joint"), default="factored")
    p.add_argument("--taxonomy")

    p = sub.add_parser("fixtures", help="generate a synthetic dataset with injected errors")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=10)
    p.add_argument("--relations", type=int, default=5, help="relations per video")
    p.add_argument("--train-videos", type=int, default=10)
    p.add_argument("--objects", type=int, default=10)
    p.add_argument("--predicates", type=int, default=8)
    p.add_argument("--fps", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missed", type=int, default=0)
    p.add_argument("--inject", action="append", default=[], metavar="TYPE=N",
                   help="e.g. background=5 (repeatable)")

    p = sub.add_parser("validate", help="check annotations (and predictions) for problems")
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--predictions")
    p.add_argument("--dataset", choices=DATASET_NAMES, default="custom")
    return parser


def _config(args) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    kwargs = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    return RunConfig(**kwargs)


def _parse_inject(items: list[str]) -> dict[ErrorType, int]:
    counts = {}
    for item in items:
        name, sep, n = item.partition("=")
        if not sep:
            raise ConfigError(f"--inject expects TYPE=N, got {item!r}")
        try:
            counts[ErrorType(name.strip().lower())] = int(n)
        except ValueError:
            raise ConfigError(f"bad --inject value {item!r}") from None
    return counts


def cmd_evaluate(args) -> int:
    ev = run_evaluate(_config(args))
    print(f"mAP {ev.mean_ap:.6f} over {len(ev.evaluated)} videos ({len(ev.excluded)} without ground truth)")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    summary = run_diagnosis(_config(args))
    trunc = summary["truncation"]
    print(f"mAP {summary['mean_ap']:.6f}; top-{trunc['top_k']} kept, "
          f"{trunc['discarded_predictions']} predictions discarded; reports in {args.out}")
    return EXIT_OK


def cmd_bias(args) -> int:
    cfg = _config(args)
    cfg.check(need_predictions=False, need_counts=False)
    report = run_bias(cfg)
    print(f"bias accuracy {report['accuracy']:.4f} (random {report['random_baseline']:.4f})")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    for name in ("videos", "relations", "objects", "predicates"):
        if getattr(args, name) < 1:
            raise ConfigError(f"--{name} must be >= 1")
    spec = InjectionSpec(counts=_parse_inject(args.inject), missed=args.missed, seed=args.seed)
    evaluation = generate_dataset(args.videos, args.relations, args.objects, args.predicates,
                                  seed=args.seed, fps=args.fps, split="eval")
    train = None
    if args.train_videos > 0:
        train = generate_dataset(args.train_videos, args.relations, args.objects, args.predicates,
                                 seed=args.seed + 1, fps=args.fps, split="train", prefix="train")
    paths = write_fixture(args.out, train, evaluation, perturb(evaluation, spec))
    print(json.dumps({k: str(v) for k, v in sorted(paths.items())}, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    dataset = load_ground_truth(args.groundtruth, args.dataset, clamp=False)
    preds = None
    findings = validate_all(list(dataset.videos.values()))
    if args.predictions:
        preds = load_predictions(args.predictions, dataset, strict=False)
        for err in preds.errors:
            print(f"error prediction {err}")
    for f in findings:
        print(f)
    errors = [f for f in findings if f.severity == "error"]
    n_pred_errors = len(preds.errors) if preds is not None else 0
    print(f"{len(findings)} finding(s), {len(errors) + n_pred_errors} error(s)")
    return EXIT_FINDINGS if errors or n_pred_errors else EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "diagnose": cmd_diagnose, "bias": cmd_bias,
            "fixtures": cmd_fixtures, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (IngestionError, EvaluationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, InfeasibleSpec, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
