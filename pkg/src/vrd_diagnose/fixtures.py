"""Deterministic synthetic ground truth and error-injected predictions.

Relations of a generated video occupy disjoint time slots separated by
empty gaps, so any two ground truths have zero overlap. That makes the
overlap of an injected prediction with every ground truth known by
construction:

* classification: host trajectories copied, one triplet slot flipped (overlap 1);
* localization: host triplet, boxes shifted sideways so the overlap lands
  inside the localization band;
* confusion: the localization geometry with a flipped slot;
* double detection: a copy of a true positive with a lower score;
* background: a prediction living inside an empty gap (overlap 0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .data_model import Prediction, RelationInstance, Trajectory, Triplet, VideoAnnotation
from .diagnosis import FP_TYPES, ErrorType
from .ingestion import Dataset, PredictionSet, dump_ground_truth, dump_predictions


class InfeasibleSpec(ValueError):
    pass


def _video_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _box_track(rng: np.random.Generator, n: int, width: int, height: int,
               side_range: tuple[float, float]) -> np.ndarray:
    lo, hi = side_range
    w = float(np.exp(rng.uniform(np.log(lo), np.log(min(hi, width - 1)))))
    h = float(np.clip(w * rng.uniform(0.6, 1.6), lo, height - 1))
    w = max(2.0, round(w))
    h = max(2.0, round(h))
    x0 = rng.uniform(0, width - w)
    y0 = rng.uniform(0, height - h)
    vx, vy = rng.normal(0, 1.5, size=2)
    t = np.arange(n)
    xs = np.clip(np.round(x0 + vx * t), 0, width - w)
    ys = np.clip(np.round(y0 + vy * t), 0, height - h)
    return np.stack([xs, ys, xs + w, ys + h], axis=1)


def generate_dataset(n_videos: int, n_relations_per_video: int, n_objects: int = 10,
                     n_predicates: int = 8, seed: int = 0, fps: float = 5.0,
                     length_range_sec: tuple[float, float] = (1.0, 30.0), gap_frames: int = 6,
                     width: int = 640, height: int = 480, side_range: tuple[float, float] = (8.0, 470.0),
                     name: str = "custom", split: str = "synthetic", prefix: str = "vid") -> Dataset:
    """Synthetic dataset whose videos each hold ``n_relations_per_video`` relations.

    Relation durations are drawn uniformly from ``length_range_sec`` and box
    sides log-uniformly from ``side_range``, so every length and pixel-size
    bin can be populated.
    """
    if min(n_videos, n_relations_per_video, n_objects, n_predicates) < 1:
        raise ValueError("sizes must be positive")
    if gap_frames < 1:
        raise ValueError("gap_frames must be >= 1")
    objects = tuple(f"object{i:02d}" for i in range(n_objects))
    predicates = tuple(f"predicate{i:02d}" for i in range(n_predicates))
    videos = {}
    for v in range(n_videos):
        rng = _video_seed(seed, v)
        vid = f"{prefix}{v:05d}"
        registry: dict[int, str] = {}
        tracks: dict[int, tuple[Trajectory, ...]] = {}
        rels = []
        cursor = gap_frames
        for k in range(n_relations_per_video):
            seconds = rng.uniform(*length_range_sec)
            n = max(1, int(round(seconds * fps)))
            s_tid, o_tid = 2 * k, 2 * k + 1
            registry[s_tid] = objects[rng.integers(n_objects)]
            registry[o_tid] = objects[rng.integers(n_objects)]
            s_traj = Trajectory(cursor, _box_track(rng, n, width, height, side_range))
            o_traj = Trajectory(cursor, _box_track(rng, n, width, height, side_range))
            tracks[s_tid] = (s_traj,)
            tracks[o_tid] = (o_traj,)
            triplet = Triplet(registry[s_tid], predicates[rng.integers(n_predicates)], registry[o_tid])
            rels.append(RelationInstance(triplet, s_traj, o_traj, vid, s_tid, o_tid, cursor, cursor + n))
            cursor += n + gap_frames
        videos[vid] = VideoAnnotation(vid, fps, cursor, width, height, registry, tuple(rels), tracks)
    return Dataset(name, split, videos, objects, predicates)


@dataclass
class InjectionSpec:
    """How many errors of each type to inject across the whole dataset.

    ``missed`` ground truths receive no true-positive copy. Localization and
    confusion overlaps are drawn from ``localization_band``.
    """

    counts: Mapping[ErrorType, int] = field(default_factory=dict)
    missed: int = 0
    localization_band: tuple[float, float] = (0.15, 0.45)
    flip_slots: tuple[str, ...] = ("subject", "predicate", "object")
    seed: int = 0

    def __post_init__(self):
        self.counts = {ErrorType(k): int(v) for k, v in dict(self.counts).items()}
        for k, v in self.counts.items():
            if k not in FP_TYPES:
                raise ValueError(f"cannot inject {k}; only the five FP types are injectable")
            if v < 0:
                raise ValueError(f"count for {k} must be >= 0")
        if self.missed < 0:
            raise ValueError("missed must be >= 0")
        lo, hi = self.localization_band
        if not 0 < lo <= hi < 1:
            raise ValueError("localization_band must satisfy 0 < lo <= hi < 1")

    def count(self, kind: ErrorType) -> int:
        return self.counts.get(kind, 0)


@dataclass
class Perturbation:
    predictions: PredictionSet
    intended: dict[str, list[ErrorType]]

    def intended_counts(self) -> dict[str, int]:
        out = {str(t): 0 for t in FP_TYPES}
        for labels in self.intended.values():
            for lab in labels:
                if lab in FP_TYPES:
                    out[str(lab)] += 1
        return out


def flip_triplet(triplet: Triplet, slot: str, dataset: Dataset, rng: np.random.Generator) -> Triplet:
    vocab = dataset.predicate_vocab if slot == "predicate" else dataset.object_vocab
    current = getattr(triplet, slot)
    choices = [x for x in vocab if x != current]
    if not choices:
        raise InfeasibleSpec(f"vocabulary for {slot} has a single label; cannot flip")
    return triplet._replace(**{slot: choices[rng.integers(len(choices))]})


def shift_for_overlap(traj: Trajectory, target: float) -> Trajectory:
    """Shift every box right by a fixed fraction of its width so the vIoU
    with ``traj`` equals ``target`` exactly (up to rounding)."""
    c = (1.0 - target) / (1.0 + target)
    b = np.array(traj.boxes)
    dx = c * (b[:, 2] - b[:, 0])
    b[:, 0] += dx
    b[:, 2] += dx
    return Trajectory(traj.begin_fid, b)


def _gaps(video: VideoAnnotation) -> list[tuple[int, int]]:
    spans = sorted((g.begin_fid, g.end_fid) for g in video.ground_truth)
    gaps, cursor = [], 0
    for b, e in spans:
        if b > cursor:
            gaps.append((cursor, b))
        cursor = max(cursor, e)
    if video.frame_count > cursor:
        gaps.append((cursor, video.frame_count))
    return gaps


def _background(video: VideoAnnotation, dataset: Dataset, rng: np.random.Generator, score: float) -> Prediction:
    gaps = _gaps(video)
    if not gaps:
        raise InfeasibleSpec(f"video {video.video_id} has no empty frames to host a background error")
    b, e = gaps[rng.integers(len(gaps))]
    n = int(rng.integers(1, e - b + 1))
    start = b + int(rng.integers(0, e - b - n + 1))
    s = _box_track(rng, n, video.width, video.height, (8.0, 200.0))
    o = _box_track(rng, n, video.width, video.height, (8.0, 200.0))
    triplet = Triplet(dataset.object_vocab[rng.integers(len(dataset.object_vocab))],
                      dataset.predicate_vocab[rng.integers(len(dataset.predicate_vocab))],
                      dataset.object_vocab[rng.integers(len(dataset.object_vocab))])
    return Prediction(triplet, score, Trajectory(start, s), Trajectory(start, o))


def _jittered(g: RelationInstance, band: tuple[float, float], rng: np.random.Generator):
    lo, hi = band
    low_side = rng.uniform(lo, hi)
    high_side = rng.uniform(low_side, hi)
    if rng.random() < 0.5:
        rs, ro = low_side, high_side
    else:
        rs, ro = high_side, low_side
    return shift_for_overlap(g.subject_traj, rs), shift_for_overlap(g.object_traj, ro)


def perturb(dataset: Dataset, spec: InjectionSpec) -> Perturbation:
    """Predictions copied from ground truth plus the injected errors of ``spec``.

    Each video's prediction list is shuffled; ``intended`` gives the label
    each prediction was engineered to receive, aligned with that list.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5EED]))
    slots = [(vid, j) for vid in sorted(dataset.videos) for j in range(len(dataset.videos[vid].ground_truth))]
    n_gt = len(slots)
    if spec.missed > n_gt:
        raise InfeasibleSpec(f"cannot miss {spec.missed} of {n_gt} ground truths")
    order = rng.permutation(n_gt)
    missed = {slots[i] for i in order[:spec.missed]}
    tp_slots = [s for s in slots if s not in missed]

    hosted = [ErrorType.CLASSIFICATION] * spec.count(ErrorType.CLASSIFICATION) \
        + [ErrorType.LOCALIZATION] * spec.count(ErrorType.LOCALIZATION) \
        + [ErrorType.CONFUSION] * spec.count(ErrorType.CONFUSION)
    if len(hosted) > n_gt:
        raise InfeasibleSpec(f"{len(hosted)} hosted errors need distinct hosts but only {n_gt} ground truths exist")
    n_dd = spec.count(ErrorType.DOUBLE_DETECTION)
    if n_dd > len(tp_slots):
        raise InfeasibleSpec(f"{n_dd} double detections but only {len(tp_slots)} true positives")
    n_bg = spec.count(ErrorType.BACKGROUND)
    if n_bg and not dataset.videos:
        raise InfeasibleSpec("no videos to host background errors")

    out: dict[str, list[tuple[Prediction, ErrorType]]] = {vid: [] for vid in sorted(dataset.videos)}
    tp_score = {}
    for vid, j in tp_slots:
        g = dataset.videos[vid].ground_truth[j]
        score = float(rng.uniform(0.05, 1.0))
        tp_score[(vid, j)] = score
        out[vid].append((Prediction(g.triplet, score, g.subject_traj, g.object_traj), ErrorType.TRUE_POSITIVE))

    hosts = [slots[i] for i in rng.permutation(n_gt)[:len(hosted)]]
    for kind, (vid, j) in zip(hosted, hosts):
        g = dataset.videos[vid].ground_truth[j]
        score = float(rng.uniform(0.0, 1.0))
        if kind is ErrorType.LOCALIZATION:
            s, o = _jittered(g, spec.localization_band, rng)
            p = Prediction(g.triplet, score, s, o)
        else:
            triplet = flip_triplet(g.triplet, spec.flip_slots[rng.integers(len(spec.flip_slots))], dataset, rng)
            if kind is ErrorType.CLASSIFICATION:
                p = Prediction(triplet, score, g.subject_traj, g.object_traj)
            else:
                s, o = _jittered(g, spec.localization_band, rng)
                p = Prediction(triplet, score, s, o)
        out[vid].append((p, kind))

    for idx in rng.permutation(len(tp_slots))[:n_dd]:
        vid, j = tp_slots[idx]
        g = dataset.videos[vid].ground_truth[j]
        score = tp_score[(vid, j)] * float(rng.uniform(0.1, 0.9))
        out[vid].append((Prediction(g.triplet, score, g.subject_traj, g.object_traj), ErrorType.DOUBLE_DETECTION))

    vids = sorted(dataset.videos)
    for _ in range(n_bg):
        vid = vids[rng.integers(len(vids))]
        out[vid].append((_background(dataset.videos[vid], dataset, rng, float(rng.uniform(0.0, 1.0))),
                         ErrorType.BACKGROUND))

    predictions, intended = {}, {}
    for vid, items in out.items():
        perm = rng.permutation(len(items))
        predictions[vid] = tuple(items[i][0] for i in perm)
        intended[vid] = [items[i][1] for i in perm]
    return Perturbation(PredictionSet(predictions), intended)


def perfect_predictions(dataset: Dataset) -> PredictionSet:
    """One prediction per ground truth, identical geometry and labels."""
    out = {}
    for vid, video in sorted(dataset.videos.items()):
        n = len(video.ground_truth)
        out[vid] = tuple(Prediction(g.triplet, 1.0 - k / (n + 1), g.subject_traj, g.object_traj)
                         for k, g in enumerate(video.ground_truth))
    return PredictionSet(out)


def noisy_predictions(dataset: Dataset, per_video: int, seed: int = 0,
                      flip_rate: float = 0.3, background_rate: float = 0.1) -> PredictionSet:
    """A realistic mix for load testing: ``per_video`` predictions per video,
    each a cropped, shifted and possibly relabelled copy of a random ground
    truth, or a background prediction."""
    slots = ("subject", "predicate", "object")
    out = {}
    for i, (vid, video) in enumerate(sorted(dataset.videos.items())):
        rng = _video_seed(seed, i)
        preds = []
        gts = video.ground_truth
        for _ in range(per_video):
            score = float(rng.uniform())
            if not gts or rng.random() < background_rate:
                preds.append(_background(video, dataset, rng, score))
                continue
            g = gts[rng.integers(len(gts))]
            b = g.begin_fid + int(rng.integers(0, max(1, g.duration // 4)))
            e = g.end_fid - int(rng.integers(0, max(1, (g.end_fid - b) // 4)))
            e = max(e, b + 1)
            s = shift_for_overlap(g.subject_traj.slice(b, e), float(rng.uniform(0.05, 1.0)))
            o = shift_for_overlap(g.object_traj.slice(b, e), float(rng.uniform(0.05, 1.0)))
            triplet = g.triplet
            if rng.random() < flip_rate:
                triplet = flip_triplet(triplet, slots[rng.integers(3)], dataset, rng)
            preds.append(Prediction(triplet, score, s, o))
        out[vid] = tuple(preds)
    return PredictionSet(out)


def write_fixture(directory, train: Optional[Dataset], evaluation: Dataset,
                  perturbation: Optional[Perturbation] = None) -> dict[str, Path]:
    """Write a fixture in the ingestion formats: ``train/``, ``eval/``,
    ``predictions.json`` and ``intended.json``."""
    directory = Path(directory)
    paths = {}
    if train is not None:
        dump_ground_truth(train, directory / "train")
        paths["train"] = directory / "train"
    dump_ground_truth(evaluation, directory / "eval")
    paths["eval"] = directory / "eval"
    if perturbation is not None:
        paths["predictions"] = dump_predictions(perturbation.predictions, directory / "predictions.json")
        intended = {vid: [str(x) for x in labels] for vid, labels in sorted(perturbation.intended.items())}
        paths["intended"] = directory / "intended.json"
        paths["intended"].write_text(json.dumps(intended, sort_keys=True), encoding="utf-8")
    return paths
