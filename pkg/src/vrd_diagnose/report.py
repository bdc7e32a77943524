"""Run the full diagnosis and write structured reports (and optional charts)."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .bias_stats import MODES, bias_accuracy, cooccurrence, fit_bias_model
from .characteristics import (CHARACTERISTICS, InstanceCounts, bin_names, characteristic_gains,
                              fn_histogram, missed_items, profile_dataset)
from .cures import sensitivity_report
from .diagnosis import DiagnosisConfig, diagnose_evaluation
from .evaluation import DatasetEvaluation, MatchConfig, default_jobs, evaluate
from .ingestion import DATASET_NAMES, Dataset, PredictionSet, load_ground_truth, load_predictions, load_taxonomy

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    groundtruth: str
    predictions: Optional[str] = None
    dataset: str = "custom"
    split: str = "eval"
    top_k: int = 200
    viou_threshold: float = 0.5
    count_source: str = "train"
    bias_mode: str = "factored"
    out: str = "vrd_report"
    charts: bool = False
    jobs: int = field(default_factory=default_jobs)
    seed: int = 0
    train_groundtruth: Optional[str] = None
    taxonomy: Optional[str] = None
    default_fps: Optional[float] = None
    background_threshold: float = 0.1
    timestamp: bool = False

    def check(self, need_predictions: bool = True, need_counts: bool = True) -> None:
        if not Path(self.groundtruth).exists():
            raise ConfigError(f"ground truth path {self.groundtruth} does not exist")
        if need_predictions and (self.predictions is None or not Path(self.predictions).exists()):
            raise ConfigError(f"predictions path {self.predictions} does not exist")
        if self.train_groundtruth is not None and not Path(self.train_groundtruth).exists():
            raise ConfigError(f"training ground truth path {self.train_groundtruth} does not exist")
        if self.dataset not in DATASET_NAMES:
            raise ConfigError(f"--dataset must be one of {DATASET_NAMES}")
        if self.top_k < 1:
            raise ConfigError("--top-k must be >= 1")
        if not 0 < self.viou_threshold <= 1:
            raise ConfigError("--viou-threshold must lie in (0, 1]")
        if self.count_source not in ("train", "eval"):
            raise ConfigError("--count-source must be 'train' or 'eval'")
        if need_counts and self.count_source == "train" and self.train_groundtruth is None:
            raise ConfigError("--count-source train needs --train-groundtruth (or pass --count-source eval)")
        if self.bias_mode not in MODES:
            raise ConfigError(f"--bias-mode must be one of {MODES}")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")

    @property
    def match_config(self) -> MatchConfig:
        return MatchConfig(self.viou_threshold, self.top_k)

    def resolved(self) -> dict:
        # jobs does not influence results and is left out so reports stay identical across it
        d = asdict(self)
        d.pop("jobs")
        d.pop("timestamp")
        return d


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _header(cfg: RunConfig) -> dict:
    header = {"toolkit": "vrd_diagnose", "version": __version__, "config": cfg.resolved()}
    if cfg.timestamp:
        header["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return header


def write_per_video_csv(path: Path, ev: DatasetEvaluation) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["video_id", "n_gt", "n_kept", "n_discarded", "n_true_positive", "ap"])
        for vid, v in ev.videos.items():
            m = v.match
            w.writerow([vid, m.n_gt, len(m.predictions), m.n_discarded, m.n_matched,
                        "" if v.ap is None else repr(v.ap)])


def load_inputs(cfg: RunConfig) -> tuple[Dataset, PredictionSet]:
    dataset = load_ground_truth(cfg.groundtruth, cfg.dataset, cfg.split)
    preds = load_predictions(cfg.predictions, dataset)
    return dataset, preds


def run_evaluate(cfg: RunConfig) -> DatasetEvaluation:
    cfg.check(need_counts=False)
    dataset, preds = load_inputs(cfg)
    ev = evaluate(dataset, preds, cfg.match_config, cfg.jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_per_video_csv(out / "per_video_ap.csv", ev)
    _dump_json(out / "summary.json", {**_header(cfg), "mean_ap": ev.mean_ap, "n_videos": len(ev.videos),
                                      "n_evaluated": len(ev.evaluated), "excluded_videos": list(ev.excluded)})
    return ev


def run_bias(cfg: RunConfig, train: Optional[Dataset] = None, eval_set: Optional[Dataset] = None) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if train is None:
        if cfg.train_groundtruth is None:
            raise ConfigError("bias analysis needs --train-groundtruth")
        train = load_ground_truth(cfg.train_groundtruth, cfg.dataset, "train")
    if eval_set is None:
        eval_set = load_ground_truth(cfg.groundtruth, cfg.dataset, cfg.split)
    model = fit_bias_model(train, mode=cfg.bias_mode)
    acc = bias_accuracy(model, eval_set)
    tax_source = cfg.taxonomy or (cfg.dataset if cfg.dataset in ("vidor", "vidvrd") else None)
    report = {**_header(cfg), **acc}
    if tax_source is not None:
        tax = load_taxonomy(tax_source)
        matrix = cooccurrence(train, tax)
        files = matrix.write_csv(out)
        report["cooccurrence"] = {"taxonomy": tax.name, "groups": list(matrix.groups), "kinds": list(matrix.kinds),
                                  "total": matrix.total, "files": [p.name for p in files]}
    else:
        report["cooccurrence"] = None
    _dump_json(out / "bias_report.json", report)
    return report


def run_diagnosis(cfg: RunConfig) -> dict:
    """Write the full report bundle into ``cfg.out`` and return the summary."""
    cfg.check()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, preds = load_inputs(cfg)
    train = load_ground_truth(cfg.train_groundtruth, cfg.dataset, "train") if cfg.train_groundtruth else None
    mcfg = cfg.match_config
    dcfg = DiagnosisConfig(background_threshold=cfg.background_threshold)
    header = _header(cfg)

    ev = evaluate(dataset, preds, mcfg, cfg.jobs)
    write_per_video_csv(out / "per_video_ap.csv", ev)

    _, breakdown = diagnose_evaluation(ev, dcfg)
    _dump_json(out / "fp_breakdown.json", {**header, **breakdown.to_dict()})

    counts = InstanceCounts.from_dataset(train if cfg.count_source == "train" else dataset)
    profiles = profile_dataset(dataset, counts, cfg.default_fps)
    hist = fn_histogram(missed_items(ev, profiles))
    _dump_json(out / "fn_characteristics.json",
               {**header, "count_source": cfg.count_source, "characteristics": hist})
    gains = characteristic_gains(ev, profiles)
    with open(out / "map_gain_characteristics.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["characteristic", "bin", "dropped_missed_gt", "map", "gain"])
        for c in CHARACTERISTICS:
            for b in bin_names(c):
                g = gains[c][b]
                w.writerow([c, b, g["dropped"], repr(g["map"]), repr(g["gain"])])

    cures = sensitivity_report(dataset, preds, mcfg, dcfg, evaluation=ev)
    _dump_json(out / "cure_sensitivity.json", {**header, **cures.to_dict()})

    bias = None
    if train is not None:
        bias = run_bias(cfg, train=train, eval_set=dataset)

    summary = {
        **header,
        "mean_ap": ev.mean_ap,
        "n_videos": len(ev.videos),
        "n_evaluated": len(ev.evaluated),
        "excluded_videos": list(ev.excluded),
        "truncation": {"top_k": mcfg.top_k, "discarded_predictions": breakdown.n_discarded},
        "fp_ratios": breakdown.ratios,
        "fp_counts": breakdown.counts,
        "n_true_positive": breakdown.n_true_positive,
        "missed_ground_truth_ratio": breakdown.missed_ratio,
        "unknown_prediction_videos": list(preds.unknown_videos),
        "out_of_vocabulary_predictions": sum(len(v) for v in preds.out_of_vocab.values()),
        "bias": None if bias is None else {"accuracy": bias["accuracy"], "random_baseline": bias["random_baseline"]},
    }
    _dump_json(out / "summary.json", summary)
    if cfg.charts:
        from .charts import render_charts
        render_charts(out)
    return summary
