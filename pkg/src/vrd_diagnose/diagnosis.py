"""False-positive taxonomy and missed ground truth for matched videos."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .evaluation import DatasetEvaluation, MatchConfig, MatchResult, evaluate


class ErrorType(str, Enum):
    TRUE_POSITIVE = "true_positive"
    CLASSIFICATION = "classification"
    LOCALIZATION = "localization"
    CONFUSION = "confusion"
    DOUBLE_DETECTION = "double_detection"
    BACKGROUND = "background"
    MISSED_GROUND_TRUTH = "missed_ground_truth"

    def __str__(self) -> str:
        return self.value


FP_TYPES = (ErrorType.CLASSIFICATION, ErrorType.LOCALIZATION, ErrorType.CONFUSION,
            ErrorType.DOUBLE_DETECTION, ErrorType.BACKGROUND)

# closest-to-a-hit explanations first
DEFAULT_PRECEDENCE = (ErrorType.DOUBLE_DETECTION, ErrorType.CLASSIFICATION, ErrorType.LOCALIZATION,
                      ErrorType.CONFUSION, ErrorType.BACKGROUND)


@dataclass(frozen=True)
class DiagnosisConfig:
    """Thresholds for the FP taxonomy.

    The upper band edge is the matching vIoU threshold of the
    :class:`MatchResult` being diagnosed; ``background_threshold`` is the
    lower edge. Bands are half-open upward: ``[low, high)`` and ``[high, 1]``.
    """

    background_threshold: float = 0.1
    precedence: tuple[ErrorType, ...] = DEFAULT_PRECEDENCE

    def __post_init__(self):
        if sorted(self.precedence) != sorted(FP_TYPES) or len(self.precedence) != len(FP_TYPES):
            raise ValueError(f"precedence must order exactly the five FP types, got {self.precedence}")
        if not 0 <= self.background_threshold:
            raise ValueError("background_threshold must be non-negative")


def _rule(kind: ErrorType, ov_same: float, ov_diff: float, low: float, high: float) -> bool:
    if kind is ErrorType.DOUBLE_DETECTION:
        # an unmatched prediction above threshold on a same-triplet GT can only
        # have lost that GT to a higher-ranked prediction
        return ov_same >= high
    if kind is ErrorType.CLASSIFICATION:
        return ov_diff >= high
    if kind is ErrorType.LOCALIZATION:
        return low <= ov_same < high
    if kind is ErrorType.CONFUSION:
        return low <= ov_diff < high
    return max(ov_same, ov_diff) < low


def classify_false_positives(m: MatchResult, dcfg: DiagnosisConfig = DiagnosisConfig()) -> list[ErrorType]:
    """One label per kept prediction, in rank order."""
    low, high = dcfg.background_threshold, m.viou_threshold
    labels = []
    for r in range(len(m.predictions)):
        if m.assigned[r] >= 0:
            labels.append(ErrorType.TRUE_POSITIVE)
            continue
        ov_same, ov_diff = float(m.best_same[r]), float(m.best_diff[r])
        for kind in dcfg.precedence:
            if _rule(kind, ov_same, ov_diff, low, high):
                labels.append(kind)
                break
        else:  # pragma: no cover - the five rules cover [0, 1]^2
            raise AssertionError(f"unclassifiable prediction: ov_same={ov_same}, ov_diff={ov_diff}")
    return labels


def governing_gt(m: MatchResult, r: int, label: ErrorType) -> int:
    """Ground-truth index whose overlap decided ``label`` for row ``r`` (-1 if none)."""
    if label is ErrorType.TRUE_POSITIVE:
        return int(m.assigned[r])
    if label in (ErrorType.DOUBLE_DETECTION, ErrorType.LOCALIZATION):
        return int(m.best_same_gt[r])
    if label in (ErrorType.CLASSIFICATION, ErrorType.CONFUSION):
        return int(m.best_diff_gt[r])
    return -1


def missed_ground_truth(m: MatchResult) -> list[int]:
    return [int(j) for j in np.flatnonzero(~m.gt_matched)]


@dataclass
class ErrorBreakdown:
    counts: dict[str, int]
    ratios: dict[str, float]
    n_true_positive: int
    n_false_positive: int
    n_discarded: int
    missed: int
    total_gt: int
    missed_ratio: float
    per_video: dict[str, dict] = field(default_factory=dict)
    precedence: tuple[str, ...] = tuple(str(t) for t in DEFAULT_PRECEDENCE)
    thresholds: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "ratios": self.ratios,
            "n_true_positive": self.n_true_positive,
            "n_false_positive": self.n_false_positive,
            "n_discarded": self.n_discarded,
            "missed_ground_truth": {"count": self.missed, "total_gt": self.total_gt,
                                    "ratio": self.missed_ratio},
            "precedence": list(self.precedence),
            "thresholds": self.thresholds,
            "per_video": self.per_video,
        }


def _ratios(counts: dict[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: (v / total if total else 0.0) for k, v in counts.items()}


def diagnose_evaluation(ev: DatasetEvaluation, dcfg: DiagnosisConfig = DiagnosisConfig()
                        ) -> tuple[dict[str, list[ErrorType]], ErrorBreakdown]:
    """Label every kept prediction of an evaluated dataset and aggregate."""
    labels: dict[str, list[ErrorType]] = {}
    totals = {str(t): 0 for t in FP_TYPES}
    per_video = {}
    n_tp = missed = total_gt = discarded = 0
    for vid, v in ev.videos.items():
        lab = classify_false_positives(v.match, dcfg)
        labels[vid] = lab
        counts = {str(t): 0 for t in FP_TYPES}
        for x in lab:
            if x is not ErrorType.TRUE_POSITIVE:
                counts[str(x)] += 1
        n_missed = len(missed_ground_truth(v.match))
        tp = sum(1 for x in lab if x is ErrorType.TRUE_POSITIVE)
        per_video[vid] = {"counts": counts, "ratios": _ratios(counts), "true_positive": tp,
                          "missed": n_missed, "n_gt": v.match.n_gt, "discarded": v.match.n_discarded}
        for k, c in counts.items():
            totals[k] += c
        n_tp += tp
        missed += n_missed
        total_gt += v.match.n_gt
        discarded += v.match.n_discarded
    breakdown = ErrorBreakdown(
        counts=totals, ratios=_ratios(totals), n_true_positive=n_tp,
        n_false_positive=sum(totals.values()), n_discarded=discarded, missed=missed,
        total_gt=total_gt, missed_ratio=missed / total_gt if total_gt else 0.0, per_video=per_video,
        precedence=tuple(str(t) for t in dcfg.precedence),
        thresholds={"high": ev.config.viou_threshold, "low": dcfg.background_threshold},
    )
    return labels, breakdown


def error_breakdown(dataset, preds, cfg: MatchConfig = MatchConfig(),
                    dcfg: DiagnosisConfig = DiagnosisConfig(), jobs: int = 1,
                    evaluation: Optional[DatasetEvaluation] = None) -> ErrorBreakdown:
    ev = evaluation if evaluation is not None else evaluate(dataset, preds, cfg, jobs)
    return diagnose_evaluation(ev, dcfg)[1]
