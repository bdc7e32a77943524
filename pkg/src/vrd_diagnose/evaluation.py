"""Per-video greedy matching, average precision and dataset mAP."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .data_model import Prediction, RelationInstance
from .ingestion import Dataset, PredictionSet
from .overlap import overlap_matrix

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


class NoGroundTruth(EvaluationError):
    """Raised by :func:`average_precision` for a video without ground truth."""


@dataclass(frozen=True)
class MatchConfig:
    viou_threshold: float = 0.5
    top_k: int = 200

    def __post_init__(self):
        if not 0 < self.viou_threshold <= 1:
            raise ValueError(f"viou_threshold must lie in (0, 1], got {self.viou_threshold}")
        if int(self.top_k) != self.top_k or self.top_k < 1:
            raise ValueError(f"top_k must be a positive integer, got {self.top_k}")


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Outcome of matching one video.

    Row ``r`` of every per-prediction array refers to ``predictions[r]``,
    the ``r``-th kept prediction in rank order. Ground-truth indices refer to
    the list passed to :func:`match_video`; ``-1`` means none.

    The ``best_same_*`` / ``best_diff_*`` fields record, against *all*
    ground truths, the highest overlap among identical-triplet and
    different-triplet ground truths respectively. ``best_same_matched``
    tells whether that ground truth had already been consumed by a
    higher-ranked prediction when this one was processed.
    """

    predictions: tuple[Prediction, ...]
    kept_indices: tuple[int, ...]
    assigned: np.ndarray
    gt_matched: np.ndarray
    overlaps: np.ndarray
    best_same: np.ndarray
    best_same_gt: np.ndarray
    best_same_matched: np.ndarray
    best_diff: np.ndarray
    best_diff_gt: np.ndarray
    n_gt: int
    n_discarded: int
    viou_threshold: float

    @property
    def hits(self) -> np.ndarray:
        return self.assigned >= 0

    @property
    def n_matched(self) -> int:
        return int(self.gt_matched.sum())


def rank_order(preds: Sequence[Prediction]) -> list[int]:
    """Indices sorted by descending score; ties keep input order."""
    return sorted(range(len(preds)), key=lambda i: -preds[i].score)


def match_video(preds: Sequence[Prediction], gts: Sequence[RelationInstance],
                cfg: MatchConfig = MatchConfig(), overlaps: Optional[np.ndarray] = None) -> MatchResult:
    """Greedy score-ordered matching of one video's predictions.

    ``overlaps`` may carry a precomputed ``(len(preds), len(gts))`` matrix of
    :func:`~vrd_diagnose.overlap.pair_overlap` values in input order.
    """
    order = rank_order(preds)
    kept = order[:cfg.top_k]
    kept_preds = tuple(preds[i] for i in kept)
    n, m = len(kept), len(gts)

    if overlaps is None:
        ov = overlap_matrix(kept_preds, gts)
    else:
        overlaps = np.asarray(overlaps, dtype=np.float64)
        if overlaps.shape != (len(preds), m):
            raise ValueError(f"overlaps has shape {overlaps.shape}, expected {(len(preds), m)}")
        ov = overlaps[kept] if n else np.zeros((0, m))

    gt_ids: dict = {}
    gt_key = np.array([gt_ids.setdefault(g.triplet, len(gt_ids)) for g in gts], dtype=np.int64)
    pred_key = np.array([gt_ids.get(p.triplet, -1) for p in kept_preds], dtype=np.int64)
    same = pred_key[:, None] == gt_key[None, :]

    assigned = np.full(n, -1, dtype=np.int64)
    gt_matched = np.zeros(m, dtype=bool)
    best_same = np.zeros(n)
    best_same_gt = np.full(n, -1, dtype=np.int64)
    best_same_matched = np.zeros(n, dtype=bool)
    best_diff = np.zeros(n)
    best_diff_gt = np.full(n, -1, dtype=np.int64)

    thr = cfg.viou_threshold
    for r in range(n):
        row = ov[r]
        srow = same[r]
        if srow.any():
            masked = np.where(srow, row, -1.0)
            j = int(np.argmax(masked))
            best_same[r], best_same_gt[r], best_same_matched[r] = row[j], j, gt_matched[j]
        if (~srow).any():
            masked = np.where(srow, -1.0, row)
            j = int(np.argmax(masked))
            best_diff[r], best_diff_gt[r] = row[j], j
        cand = srow & ~gt_matched & (row >= thr)
        if cand.any():
            # argmax returns the lowest index among equal maxima
            j = int(np.argmax(np.where(cand, row, -1.0)))
            assigned[r] = j
            gt_matched[j] = True

    for arr in (assigned, gt_matched, ov, best_same, best_same_gt, best_same_matched, best_diff, best_diff_gt):
        arr.flags.writeable = False
    return MatchResult(kept_preds, tuple(kept), assigned, gt_matched, ov, best_same, best_same_gt,
                       best_same_matched, best_diff, best_diff_gt, m, len(preds) - n, thr)


def ap_from_hits(hits: Iterable[bool], n_gt: int) -> float:
    """Non-interpolated AP: mean precision at each hit, over ``n_gt``."""
    if n_gt <= 0:
        raise NoGroundTruth("average precision is undefined without ground truth")
    total = 0.0
    tp = 0
    for k, hit in enumerate(hits, start=1):
        if hit:
            tp += 1
            total += tp / k
    return total / n_gt


def average_precision(m: MatchResult, n_gt: Optional[int] = None) -> float:
    """AP of one matched video; ``n_gt`` overrides the ground-truth count."""
    return ap_from_hits(m.hits.tolist(), m.n_gt if n_gt is None else n_gt)


def mean_of(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


@dataclass
class VideoEvaluation:
    video_id: str
    gts: tuple[RelationInstance, ...]
    match: MatchResult
    ap: Optional[float]


@dataclass
class DatasetEvaluation:
    config: MatchConfig
    videos: dict[str, VideoEvaluation]
    mean_ap: float
    excluded: tuple[str, ...] = field(default=())

    @property
    def per_video_ap(self) -> dict[str, Optional[float]]:
        return {vid: v.ap for vid, v in self.videos.items()}

    @property
    def evaluated(self) -> list[str]:
        return [vid for vid, v in self.videos.items() if v.ap is not None]


def _evaluate_one(args) -> VideoEvaluation:
    vid, preds, gts, cfg = args
    m = match_video(preds, gts, cfg)
    ap = average_precision(m) if m.n_gt > 0 else None
    return VideoEvaluation(vid, tuple(gts), m, ap)


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Order-preserving map; falls back to serial for one job or few items."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def evaluate(dataset: Dataset, predictions: PredictionSet | Mapping[str, Sequence[Prediction]],
             cfg: MatchConfig = MatchConfig(), jobs: int = 1) -> DatasetEvaluation:
    """Match every video and fold per-video AP into mAP.

    Videos without ground truth are excluded from the mean; videos without
    predictions score 0.
    """
    if len(dataset.videos) == 0:
        raise EvaluationError("cannot evaluate an empty dataset")
    if isinstance(predictions, PredictionSet):
        predictions = predictions.predictions
    items = [(vid, tuple(predictions.get(vid, ())), dataset.videos[vid].ground_truth, cfg)
             for vid in sorted(dataset.videos)]
    results = parallel_map(_evaluate_one, items, jobs)
    videos = {r.video_id: r for r in results}
    excluded = tuple(vid for vid, r in videos.items() if r.ap is None)
    aps = [r.ap for r in videos.values() if r.ap is not None]
    if not aps:
        raise EvaluationError("no video in the dataset has ground truth")
    if excluded:
        log.info("%d videos without ground truth excluded from mAP", len(excluded))
    return DatasetEvaluation(cfg, videos, mean_of(aps), excluded)


def mean_ap(dataset: Dataset, predictions, cfg: MatchConfig = MatchConfig(),
            jobs: int = 1) -> tuple[float, dict[str, Optional[float]]]:
    ev = evaluate(dataset, predictions, cfg, jobs)
    return ev.mean_ap, ev.per_video_ap
