"""False-negative analysis by relation characteristics.

Every ground-truth instance is binned along six axes: duration, training
instance counts of its predicate, subject and object categories, and mean
box area of its subject and object trajectories.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .data_model import RelationInstance, VideoAnnotation
from .evaluation import DatasetEvaluation, MatchConfig, average_precision, evaluate, match_video, mean_of
from .ingestion import Dataset

log = logging.getLogger(__name__)

INF = math.inf
LENGTH_BINS = (("S", 0.0, 10.0), ("M", 10.0, 20.0), ("L", 20.0, INF))
COUNT_BINS = (("XS", 0, 10), ("S", 10, 100), ("M", 100, 1_000), ("L", 1_000, 10_000),
              ("XL", 10_000, 100_000), ("XXL", 100_000, INF))
PIXEL_BINS = (("XS", 0.0, 16.0 ** 2), ("S", 16.0 ** 2, 32.0 ** 2), ("M", 32.0 ** 2, 96.0 ** 2),
              ("L", 96.0 ** 2, 288.0 ** 2), ("XL", 288.0 ** 2, INF))

CHARACTERISTICS = ("length", "predicate_count", "subject_count", "object_count",
                   "subject_pixel", "object_pixel")
BINS = {
    "length": LENGTH_BINS,
    "predicate_count": COUNT_BINS,
    "subject_count": COUNT_BINS,
    "object_count": COUNT_BINS,
    "subject_pixel": PIXEL_BINS,
    "object_pixel": PIXEL_BINS,
}


def bin_names(characteristic: str) -> tuple[str, ...]:
    return tuple(name for name, _, _ in BINS[characteristic])


def assign_bin(value: float, bins) -> str:
    """Left-open, right-closed bins; non-positive values land in the first bin."""
    for name, lo, hi in bins:
        if value <= hi and (value > lo or name == bins[0][0]):
            return name
    return bins[-1][0]


@dataclass
class InstanceCounts:
    predicates: Counter = field(default_factory=Counter)
    subjects: Counter = field(default_factory=Counter)
    objects: Counter = field(default_factory=Counter)

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "InstanceCounts":
        counts = cls()
        for _, rel in dataset.relations():
            s, p, o = rel.triplet
            counts.predicates[p] += 1
            counts.subjects[s] += 1
            counts.objects[o] += 1
        return counts


@dataclass(frozen=True)
class CharacteristicProfile:
    length: str
    predicate_count: str
    subject_count: str
    object_count: str
    subject_pixel: str
    object_pixel: str

    def get(self, characteristic: str) -> str:
        return getattr(self, characteristic)


_warned_missing: set = set()


def _count(counter: Counter, label: str, role: str) -> int:
    if label not in counter and (role, label) not in _warned_missing:
        _warned_missing.add((role, label))
        log.warning("%s category %r has no training instances; binned as %s", role, label, COUNT_BINS[0][0])
    return counter.get(label, 0)


def characterize(g: RelationInstance, video: VideoAnnotation, counts: InstanceCounts,
                 default_fps: Optional[float] = None) -> CharacteristicProfile:
    fps = video.fps if video.fps is not None else default_fps
    if fps is None or not fps > 0:
        raise ValueError(f"video {video.video_id} has no usable fps; supply a default fps")
    s, p, o = g.triplet
    seconds = (g.end_fid - g.begin_fid) / fps
    return CharacteristicProfile(
        length=assign_bin(seconds, LENGTH_BINS),
        predicate_count=assign_bin(_count(counts.predicates, p, "predicate"), COUNT_BINS),
        subject_count=assign_bin(_count(counts.subjects, s, "subject"), COUNT_BINS),
        object_count=assign_bin(_count(counts.objects, o, "object"), COUNT_BINS),
        subject_pixel=assign_bin(g.subject_traj.mean_area(), PIXEL_BINS),
        object_pixel=assign_bin(g.object_traj.mean_area(), PIXEL_BINS),
    )


def profile_dataset(dataset: Dataset, counts: InstanceCounts,
                    default_fps: Optional[float] = None) -> dict[str, list[CharacteristicProfile]]:
    return {vid: [characterize(g, video, counts, default_fps) for g in video.ground_truth]
            for vid, video in sorted(dataset.videos.items())}


def fn_histogram(items: Iterable[tuple[CharacteristicProfile, bool]]) -> dict[str, dict[str, dict]]:
    """Missed ratio per characteristic and bin from ``(profile, missed)`` pairs.

    Bins without ground truth report ``ratio: None``.
    """
    totals = {c: Counter() for c in CHARACTERISTICS}
    missed = {c: Counter() for c in CHARACTERISTICS}
    for profile, is_missed in items:
        for c in CHARACTERISTICS:
            b = profile.get(c)
            totals[c][b] += 1
            if is_missed:
                missed[c][b] += 1
    out = {}
    for c in CHARACTERISTICS:
        out[c] = {}
        for b in bin_names(c):
            t = totals[c][b]
            out[c][b] = {"total": t, "missed": missed[c][b], "ratio": missed[c][b] / t if t else None}
    return out


def missed_items(ev: DatasetEvaluation, profiles: Mapping[str, list[CharacteristicProfile]]):
    for vid, v in ev.videos.items():
        for j, profile in enumerate(profiles[vid]):
            yield profile, not bool(v.match.gt_matched[j])


def map_after_dropping(ev: DatasetEvaluation, drop: Mapping[str, Iterable[int]]) -> float:
    """mAP with the listed ground truths removed and every affected video re-matched."""
    aps = []
    for vid, v in ev.videos.items():
        gone = set(drop.get(vid, ()))
        if not gone:
            if v.ap is not None:
                aps.append(v.ap)
            continue
        keep = [j for j in range(v.match.n_gt) if j not in gone]
        m = match_video(v.match.predictions, [v.gts[j] for j in keep], ev.config,
                        overlaps=np.asarray(v.match.overlaps)[:, keep])
        if m.n_gt > 0:
            aps.append(average_precision(m))
    return mean_of(aps)


def _missed_in_bin(ev, profiles, characteristic, bin_name) -> dict[str, list[int]]:
    drop = {}
    for vid, v in ev.videos.items():
        idx = [j for j, prof in enumerate(profiles[vid])
               if not v.match.gt_matched[j] and prof.get(characteristic) == bin_name]
        if idx:
            drop[vid] = idx
    return drop


def characteristic_gains(ev: DatasetEvaluation, profiles: Mapping[str, list[CharacteristicProfile]]
                         ) -> dict[str, dict[str, dict]]:
    """Per characteristic and bin: missed GTs dropped and resulting mAP gain."""
    out = {}
    for c in CHARACTERISTICS:
        out[c] = {}
        for b in bin_names(c):
            drop = _missed_in_bin(ev, profiles, c, b)
            n = sum(len(x) for x in drop.values())
            new_map = map_after_dropping(ev, drop) if n else ev.mean_ap
            out[c][b] = {"dropped": n, "map": new_map, "gain": new_map - ev.mean_ap}
    return out


def map_gain_by_characteristic(dataset: Dataset, preds, cfg: MatchConfig = MatchConfig(),
                               characteristic: str = "length", bin_name: str = "S",
                               counts: Optional[InstanceCounts] = None,
                               evaluation: Optional[DatasetEvaluation] = None,
                               default_fps: Optional[float] = None, jobs: int = 1) -> float:
    if characteristic not in BINS:
        raise ValueError(f"unknown characteristic {characteristic!r}; expected one of {CHARACTERISTICS}")
    if bin_name not in bin_names(characteristic):
        raise ValueError(f"unknown bin {bin_name!r} for {characteristic}")
    ev = evaluation if evaluation is not None else evaluate(dataset, preds, cfg, jobs)
    counts = counts if counts is not None else InstanceCounts.from_dataset(dataset)
    profiles = profile_dataset(dataset, counts, default_fps)
    drop = _missed_in_bin(ev, profiles, characteristic, bin_name)
    if not drop:
        return 0.0
    return map_after_dropping(ev, drop) - ev.mean_ap
