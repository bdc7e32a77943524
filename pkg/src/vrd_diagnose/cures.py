"""Oracle fixes per error type and the resulting mAP sensitivity.

Each cure starts from the same baseline, modifies only the kept (top-k)
predictions of each video, and is followed by a full re-match.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .data_model import Prediction, RelationInstance
from .diagnosis import FP_TYPES, DiagnosisConfig, ErrorType, diagnose_evaluation
from .evaluation import (DatasetEvaluation, MatchConfig, VideoEvaluation, average_precision,
                         evaluate, match_video, mean_of)
from .ingestion import Dataset, PredictionSet
from .overlap import overlap_matrix

CURE_TYPES = FP_TYPES + (ErrorType.MISSED_GROUND_TRUTH,)


def parse_error_type(name) -> ErrorType:
    if isinstance(name, ErrorType):
        if name not in CURE_TYPES:
            raise ValueError(f"no cure defined for {name}")
        return name
    try:
        kind = ErrorType(str(name).lower())
    except ValueError:
        raise ValueError(f"unknown error type {name!r}; expected one of "
                         f"{[str(t) for t in CURE_TYPES]}") from None
    if kind not in CURE_TYPES:
        raise ValueError(f"no cure defined for {kind}")
    return kind


@dataclass
class CuredVideo:
    preds: tuple[Prediction, ...]
    gts: tuple[RelationInstance, ...]
    overlaps: np.ndarray
    corrected: int = 0
    removed: int = 0
    gts_dropped: int = 0

    @property
    def modified(self) -> bool:
        return bool(self.corrected or self.removed or self.gts_dropped)


@dataclass
class CureRow:
    error_type: str
    cured_map: float
    gain: float
    corrected: int
    removed: int
    gts_dropped: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CureReport:
    baseline_map: float
    rows: list[CureRow] = field(default_factory=list)

    def row(self, error_type) -> CureRow:
        key = str(parse_error_type(error_type))
        return next(r for r in self.rows if r.error_type == key)

    def to_dict(self) -> dict:
        return {"baseline_map": self.baseline_map, "cures": [r.to_dict() for r in self.rows]}


@dataclass
class CureOutcome:
    dataset: Dataset
    predictions: PredictionSet
    row: CureRow


def _best_targets(preds: Sequence[Prediction], gts: Sequence[RelationInstance],
                  ov: np.ndarray, thr: float) -> np.ndarray:
    """Best same-triplet ground truth at or above threshold per prediction, -1 if none."""
    out = np.full(len(preds), -1, dtype=np.int64)
    for r, p in enumerate(preds):
        best = -1.0
        for j, g in enumerate(gts):
            if g.triplet == p.triplet and ov[r, j] >= thr and ov[r, j] > best:
                best, out[r] = ov[r, j], j
    return out


def _dedupe(preds, gts, ov, corrected: set[int], thr: float) -> list[int]:
    """Rows to keep after removing lower-scored duplicates created by a correction.

    Rows are in rank order, so the first row targeting a ground truth is the
    highest-scored one.
    """
    targets = _best_targets(preds, gts, ov, thr)
    groups: dict[int, list[int]] = {}
    for r, j in enumerate(targets):
        if j >= 0:
            groups.setdefault(int(j), []).append(r)
    drop = set()
    for rows in groups.values():
        if len(rows) > 1 and corrected.intersection(rows):
            drop.update(rows[1:])
    return [r for r in range(len(preds)) if r not in drop]


def cure_video(v: VideoEvaluation, labels: Sequence[ErrorType], error_type: ErrorType,
               cfg: MatchConfig) -> CuredVideo:
    m = v.match
    preds = list(m.predictions)
    ov = np.array(m.overlaps, dtype=np.float64)
    gts = v.gts

    if error_type is ErrorType.MISSED_GROUND_TRUTH:
        missed = set(np.flatnonzero(~m.gt_matched).tolist())
        kept_gts = [j for j in range(len(gts)) if j not in missed]
        return CuredVideo(tuple(preds), tuple(gts[j] for j in kept_gts), ov[:, kept_gts],
                          gts_dropped=len(missed))

    if error_type in (ErrorType.CONFUSION, ErrorType.DOUBLE_DETECTION, ErrorType.BACKGROUND):
        keep = [r for r, lab in enumerate(labels) if lab is not error_type]
        return CuredVideo(tuple(preds[r] for r in keep), tuple(gts), ov[keep],
                          removed=len(preds) - len(keep))

    corrected: set[int] = set()
    gt_ov = None
    for r, lab in enumerate(labels):
        if lab is not error_type:
            continue
        if error_type is ErrorType.CLASSIFICATION:
            j = int(m.best_diff_gt[r])
            preds[r] = replace(preds[r], triplet=gts[j].triplet)
        else:
            j = int(m.best_same_gt[r])
            if gt_ov is None:
                gt_ov = overlap_matrix(gts, gts)
            preds[r] = replace(preds[r], subject_traj=gts[j].subject_traj, object_traj=gts[j].object_traj)
            ov[r] = gt_ov[j]
        corrected.add(r)
    keep = _dedupe(preds, gts, ov, corrected, cfg.viou_threshold) if corrected else list(range(len(preds)))
    return CuredVideo(tuple(preds[r] for r in keep), tuple(gts), ov[keep],
                      corrected=len(corrected), removed=len(preds) - len(keep))


def _video_ap(v: VideoEvaluation, cv: CuredVideo, cfg: MatchConfig,
              error_type: ErrorType) -> Optional[float]:
    if not cv.modified:
        return v.ap
    if error_type is ErrorType.MISSED_GROUND_TRUTH:
        # shrink the denominator; the ranked hit list is untouched
        n = v.match.n_gt - cv.gts_dropped
        return average_precision(v.match, n_gt=n) if n > 0 else None
    m = match_video(cv.preds, cv.gts, cfg, overlaps=cv.overlaps)
    return average_precision(m) if m.n_gt > 0 else None


def _cure_all(ev: DatasetEvaluation, labels: dict[str, list[ErrorType]], error_type: ErrorType):
    cured = {vid: cure_video(v, labels[vid], error_type, ev.config) for vid, v in ev.videos.items()}
    aps = [_video_ap(ev.videos[vid], cv, ev.config, error_type) for vid, cv in cured.items()]
    cured_map = mean_of(a for a in aps if a is not None)
    row = CureRow(str(error_type), cured_map, cured_map - ev.mean_ap,
                  sum(cv.corrected for cv in cured.values()),
                  sum(cv.removed for cv in cured.values()),
                  sum(cv.gts_dropped for cv in cured.values()))
    return cured, row


def apply_cure(dataset: Dataset, preds, cfg: MatchConfig = MatchConfig(), error_type="background",
               dcfg: DiagnosisConfig = DiagnosisConfig(), evaluation: Optional[DatasetEvaluation] = None,
               jobs: int = 1) -> CureOutcome:
    """Apply one oracle fix and return the cured dataset, predictions and report row."""
    kind = parse_error_type(error_type)
    ev = evaluation if evaluation is not None else evaluate(dataset, preds, cfg, jobs)
    labels, _ = diagnose_evaluation(ev, dcfg)
    cured, row = _cure_all(ev, labels, kind)
    new_dataset = dataset
    if kind is ErrorType.MISSED_GROUND_TRUTH:
        new_dataset = dataset.with_ground_truth({vid: cv.gts for vid, cv in cured.items() if cv.gts_dropped})
    new_preds = PredictionSet({vid: cv.preds for vid, cv in cured.items()})
    return CureOutcome(new_dataset, new_preds, row)


def sensitivity_report(dataset: Dataset, preds, cfg: MatchConfig = MatchConfig(),
                       dcfg: DiagnosisConfig = DiagnosisConfig(),
                       evaluation: Optional[DatasetEvaluation] = None, jobs: int = 1) -> CureReport:
    """Every cure applied independently to the same baseline, sorted by gain."""
    ev = evaluation if evaluation is not None else evaluate(dataset, preds, cfg, jobs)
    labels, _ = diagnose_evaluation(ev, dcfg)
    rows = [_cure_all(ev, labels, kind)[1] for kind in CURE_TYPES]
    order = {str(k): i for i, k in enumerate(CURE_TYPES)}
    rows.sort(key=lambda r: (-r.gain, order[r.error_type]))
    return CureReport(ev.mean_ap, rows)
