"""Readers and writers for annotation, prediction and taxonomy files.

Ground truth follows the public VidOR / ImageNet-VidVRD per-video JSON
layout; predictions use the aggregate ``{"results": {video_id: [...]}}``
layout shared by both benchmarks.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .data_model import Prediction, RelationInstance, Trajectory, Triplet, VideoAnnotation

log = logging.getLogger(__name__)

DATASET_NAMES = ("vidor", "vidvrd", "custom")


class IngestionError(ValueError):
    """Malformed or inconsistent input file."""


@dataclass(frozen=True)
class Dataset:
    name: str
    split: str
    videos: Mapping[str, VideoAnnotation]
    object_vocab: tuple[str, ...]
    predicate_vocab: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.videos)

    def relations(self) -> Iterator[tuple[VideoAnnotation, RelationInstance]]:
        for vid in sorted(self.videos):
            video = self.videos[vid]
            for rel in video.ground_truth:
                yield video, rel

    @property
    def relation_count(self) -> int:
        return sum(len(v.ground_truth) for v in self.videos.values())

    def with_ground_truth(self, gts: Mapping[str, Sequence[RelationInstance]]) -> "Dataset":
        """Copy with the ground truth of the listed videos replaced."""
        videos = dict(self.videos)
        for vid, rels in gts.items():
            videos[vid] = replace(videos[vid], ground_truth=tuple(rels))
        return replace(self, videos=videos)


@dataclass(frozen=True)
class PredictionSet:
    predictions: Mapping[str, tuple[Prediction, ...]]
    unknown_videos: tuple[str, ...] = ()
    out_of_vocab: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    errors: tuple[str, ...] = ()

    def get(self, video_id: str) -> tuple[Prediction, ...]:
        return self.predictions.get(video_id, ())

    def __len__(self) -> int:
        return sum(len(v) for v in self.predictions.values())


# ---------------------------------------------------------------- ground truth

def _require(obj: Mapping, key: str, source: str):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise IngestionError(f"{source}: missing field {key!r}") from None


def _box_row(bbox: Mapping, source: str) -> list[float]:
    try:
        row = [float(bbox[k]) for k in ("xmin", "ymin", "xmax", "ymax")]
    except (KeyError, TypeError, ValueError):
        raise IngestionError(f"{source}: malformed bbox {bbox!r}") from None
    if not all(math.isfinite(v) for v in row):
        raise IngestionError(f"{source}: non-finite bbox {bbox!r}")
    return row


def _contiguous_segments(frames: dict[int, list[float]]) -> tuple[Trajectory, ...]:
    fids = sorted(frames)
    segments = []
    start = prev = fids[0]
    for fid in fids[1:] + [None]:
        if fid is not None and fid == prev + 1:
            prev = fid
            continue
        segments.append(Trajectory(start, [frames[f] for f in range(start, prev + 1)]))
        if fid is not None:
            start = prev = fid
    return tuple(segments)


def _covering(segments: Sequence[Trajectory], begin: int, end: int) -> Optional[Trajectory]:
    for seg in segments:
        if seg.begin_fid <= begin and end <= seg.end_fid:
            return seg.slice(begin, end)
    return None


def parse_video_annotation(obj: Mapping, source: str = "<memory>", clamp: bool = True) -> VideoAnnotation:
    vid = str(_require(obj, "video_id", source))
    src = f"{source} [{vid}]"
    width = int(_require(obj, "width", src))
    height = int(_require(obj, "height", src))
    fps = obj.get("fps")
    fps = None if fps is None else float(fps)
    per_frame = _require(obj, "trajectories", src)
    frame_count = int(obj.get("frame_count", len(per_frame)))

    objects: dict[int, str] = {}
    for entry in _require(obj, "subject/objects", src):
        tid = int(_require(entry, "tid", src))
        if tid in objects:
            raise IngestionError(f"{src}: duplicate tid {tid} in subject/objects")
        objects[tid] = str(_require(entry, "category", src))

    frames_by_tid: dict[int, dict[int, list[float]]] = {}
    for fid, boxes in enumerate(per_frame):
        for entry in boxes:
            tid = int(_require(entry, "tid", f"{src} frame {fid}"))
            if tid not in objects:
                raise IngestionError(f"{src}: frame {fid} references unknown tid {tid}")
            frames_by_tid.setdefault(tid, {})[fid] = _box_row(
                _require(entry, "bbox", f"{src} frame {fid}"), f"{src} frame {fid} tid {tid}")

    n_clamped = 0
    if clamp:
        for frames in frames_by_tid.values():
            for row in frames.values():
                fixed = [min(max(row[0], 0.0), width), min(max(row[1], 0.0), height),
                         min(max(row[2], 0.0), width), min(max(row[3], 0.0), height)]
                if fixed != row:
                    n_clamped += 1
                    row[:] = fixed
    if n_clamped:
        log.warning("%s: clamped %d boxes to the %dx%d frame", src, n_clamped, width, height)

    tracks = {tid: _contiguous_segments(frames) for tid, frames in sorted(frames_by_tid.items())}

    rels = []
    for k, r in enumerate(_require(obj, "relation_instances", src)):
        rsrc = f"{src} relation {k}"
        s_tid = int(_require(r, "subject_tid", rsrc))
        o_tid = int(_require(r, "object_tid", rsrc))
        begin = int(_require(r, "begin_fid", rsrc))
        end = int(_require(r, "end_fid", rsrc))
        for tid in (s_tid, o_tid):
            if tid not in objects:
                raise IngestionError(f"{rsrc}: unknown tid {tid}")
        if end <= begin:
            raise IngestionError(f"{rsrc}: empty interval [{begin}, {end})")
        trajs = []
        for tid in (s_tid, o_tid):
            traj = _covering(tracks.get(tid, ()), begin, end)
            if traj is None:
                raise IngestionError(f"{rsrc}: tid {tid} has no box on some frame of [{begin}, {end})")
            trajs.append(traj)
        triplet = Triplet(objects[s_tid], str(_require(r, "predicate", rsrc)), objects[o_tid])
        rels.append(RelationInstance(triplet, trajs[0], trajs[1], vid, s_tid, o_tid, begin, end))

    return VideoAnnotation(vid, fps, frame_count, width, height, objects, tuple(rels), tracks)


def _read_vocab(vocab) -> Optional[tuple[str, ...]]:
    if vocab is None:
        return None
    if isinstance(vocab, (str, Path)):
        lines = Path(vocab).read_text(encoding="utf-8").splitlines()
        return tuple(line.strip() for line in lines if line.strip())
    return tuple(vocab)


def _load_json(path: Path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise IngestionError(f"{path}: invalid JSON ({e})") from None


def load_ground_truth(path, dataset_name: str = "custom", split: str = "",
                      object_vocab=None, predicate_vocab=None, clamp: bool = True) -> Dataset:
    """Load a directory of per-video annotation files or one aggregate file.

    An aggregate file may hold a list of video records, a mapping of video
    id to record, or a single record.
    """
    if dataset_name not in DATASET_NAMES:
        raise IngestionError(f"unknown dataset name {dataset_name!r}; expected one of {DATASET_NAMES}")
    path = Path(path)
    records: list[tuple[Mapping, str]] = []
    if path.is_dir():
        for f in sorted(path.rglob("*.json")):
            records.append((_load_json(f), str(f)))
    elif path.is_file():
        data = _load_json(path)
        if isinstance(data, list):
            records = [(r, str(path)) for r in data]
        elif isinstance(data, dict) and "video_id" in data:
            records = [(data, str(path))]
        elif isinstance(data, dict):
            records = [(r, str(path)) for _, r in sorted(data.items())]
        else:
            raise IngestionError(f"{path}: unrecognised annotation layout")
    else:
        raise IngestionError(f"{path}: no such file or directory")

    videos: dict[str, VideoAnnotation] = {}
    for obj, source in records:
        ann = parse_video_annotation(obj, source, clamp=clamp)
        if ann.video_id in videos:
            raise IngestionError(f"{source}: duplicate video_id {ann.video_id!r}")
        videos[ann.video_id] = ann
    videos = {vid: videos[vid] for vid in sorted(videos)}

    obj_vocab = _read_vocab(object_vocab)
    pred_vocab = _read_vocab(predicate_vocab)
    if obj_vocab is None:
        obj_vocab = tuple(sorted({c for v in videos.values() for c in v.objects.values()}))
    if pred_vocab is None:
        pred_vocab = tuple(sorted({r.triplet.predicate for v in videos.values() for r in v.ground_truth}))
    objs, preds = set(obj_vocab), set(pred_vocab)
    for ann in videos.values():
        for rel in ann.ground_truth:
            s, p, o = rel.triplet
            missing = [x for x, vocab in ((s, objs), (p, preds), (o, objs)) if x not in vocab]
            if missing:
                raise IngestionError(f"{ann.video_id}: labels {missing} of {rel.triplet} not in vocabulary")
    return Dataset(dataset_name, split, videos, obj_vocab, pred_vocab)


def video_to_json(ann: VideoAnnotation) -> dict:
    per_frame: list[list[dict]] = [[] for _ in range(ann.frame_count)]
    for tid, segments in sorted(ann.tracks.items()):
        for seg in segments:
            for i, row in enumerate(seg.boxes.tolist()):
                fid = seg.begin_fid + i
                while fid >= len(per_frame):
                    per_frame.append([])
                per_frame[fid].append({"tid": tid, "bbox": dict(zip(("xmin", "ymin", "xmax", "ymax"), row))})
    out = {
        "video_id": ann.video_id,
        "frame_count": ann.frame_count,
        "width": ann.width,
        "height": ann.height,
        "subject/objects": [{"tid": tid, "category": cat} for tid, cat in sorted(ann.objects.items())],
        "trajectories": per_frame,
        "relation_instances": [
            {"subject_tid": r.subject_tid, "object_tid": r.object_tid, "predicate": r.triplet.predicate,
             "begin_fid": r.begin_fid, "end_fid": r.end_fid}
            for r in ann.ground_truth
        ],
    }
    if ann.fps is not None:
        out["fps"] = ann.fps
    return out


def dump_ground_truth(dataset: Dataset, directory) -> list[Path]:
    """Write one annotation file per video; the inverse of :func:`load_ground_truth`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for vid in sorted(dataset.videos):
        f = directory / f"{vid}.json"
        f.write_text(json.dumps(video_to_json(dataset.videos[vid]), sort_keys=True), encoding="utf-8")
        written.append(f)
    return written


# ---------------------------------------------------------------- predictions

def _parse_prediction(rec: Mapping, source: str) -> Prediction:
    try:
        triplet = Triplet(*(str(x) for x in rec["triplet"]))
    except (KeyError, TypeError):
        raise IngestionError(f"{source}: missing or malformed triplet") from None
    try:
        score = float(rec["score"])
    except (KeyError, TypeError, ValueError):
        raise IngestionError(f"{source}: missing or malformed score") from None
    if not math.isfinite(score):
        raise IngestionError(f"{source}: non-finite score {rec['score']!r}")
    try:
        begin, end = (int(x) for x in rec["duration"])
    except (KeyError, TypeError, ValueError):
        raise IngestionError(f"{source}: missing or malformed duration") from None
    if end <= begin:
        raise IngestionError(f"{source}: zero-length duration [{begin}, {end})")
    trajs = []
    for key in ("sub_traj", "obj_traj"):
        boxes = rec.get(key)
        if not isinstance(boxes, list):
            raise IngestionError(f"{source}: missing {key}")
        if len(boxes) != end - begin:
            raise IngestionError(f"{source}: {key} has {len(boxes)} boxes for duration [{begin}, {end})")
        arr = np.asarray(boxes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 4 or not np.isfinite(arr).all():
            raise IngestionError(f"{source}: {key} must be a list of finite [xmin, ymin, xmax, ymax]")
        trajs.append(Trajectory(begin, arr))
    return Prediction(triplet, score, trajs[0], trajs[1])


_WS = re.compile(r"[ \t\n\r]*")
_DECODER = json.JSONDecoder()


def _members(text: str, pos: int, source: str):
    """Generator over the members of the JSON object starting at ``text[pos]``.

    Yields ``(key, value_pos)`` and expects to be sent the offset just past
    that value; returns the offset just past the closing brace.
    """
    pos = _WS.match(text, pos).end()
    if text[pos:pos + 1] != "{":
        raise IngestionError(f"{source}: expected a JSON object at offset {pos}")
    pos = _WS.match(text, pos + 1).end()
    if text[pos:pos + 1] == "}":
        return pos + 1
    while True:
        key, pos = _decode_at(text, pos, source)
        pos = _WS.match(text, pos).end()
        if not isinstance(key, str) or text[pos:pos + 1] != ":":
            raise IngestionError(f"{source}: malformed object member at offset {pos}")
        pos = yield key, _WS.match(text, pos + 1).end()
        pos = _WS.match(text, pos).end()
        ch = text[pos:pos + 1]
        if ch == "}":
            return pos + 1
        if ch != ",":
            raise IngestionError(f"{source}: expected ',' or '}}' at offset {pos}")
        pos = _WS.match(text, pos + 1).end()


def _decode_at(text: str, pos: int, source: str):
    try:
        return _DECODER.raw_decode(text, pos)
    except json.JSONDecodeError as e:
        raise IngestionError(f"{source}: invalid JSON ({e})") from None


def _walk(gen, visit):
    """Drive a ``_members`` generator, calling ``visit(key, pos) -> end``."""
    try:
        key, pos = next(gen)
        while True:
            key, pos = gen.send(visit(key, pos))
    except StopIteration as stop:
        return stop.value


def _for_each_result(text: str, source: str, on_video) -> None:
    """Decode the ``results`` mapping one video at a time and hand each to
    ``on_video(video_id, records)``, so peak memory is the raw text plus a
    single video's records rather than the whole tree."""
    found = False

    def video(vid, pos):
        value, end = _decode_at(text, pos, source)
        on_video(vid, value)
        return end

    def top(key, pos):
        nonlocal found
        if key == "results" and not found:
            found = True
            return _walk(_members(text, pos, source), video)
        return _decode_at(text, pos, source)[1]

    _walk(_members(text, 0, source), top)
    if not found:
        raise IngestionError(f"{source}: expected an object with a 'results' mapping")


def load_predictions(path, dataset: Dataset, strict: bool = True) -> PredictionSet:
    """Parse an aggregate prediction file against a ground-truth dataset.

    With ``strict=False`` malformed records are skipped and listed in
    ``errors`` instead of raising.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    objs, preds_vocab = set(dataset.object_vocab), set(dataset.predicate_vocab)

    predictions: dict[str, tuple[Prediction, ...]] = {}
    unknown, errors = [], []
    oov: dict[str, tuple[int, ...]] = {}

    def on_video(vid, records):
        if vid in predictions or vid in unknown:
            raise IngestionError(f"{path}: video {vid!r} listed twice in results")
        if vid not in dataset.videos:
            unknown.append(vid)
            return
        if not isinstance(records, list):
            raise IngestionError(f"{path} [{vid}]: expected a list of prediction records")
        parsed = []
        for k, rec in enumerate(records):
            try:
                parsed.append(_parse_prediction(rec, f"{path} [{vid}] record {k}"))
            except (IngestionError, ValueError) as e:
                if strict:
                    raise IngestionError(str(e)) from None
                errors.append(str(e))
        predictions[vid] = tuple(parsed)

    _for_each_result(text, str(path), on_video)
    del text
    predictions = {vid: predictions[vid] for vid in sorted(predictions)}
    for vid, parsed in predictions.items():
        flagged = tuple(i for i, p in enumerate(parsed)
                        if p.triplet.subject not in objs or p.triplet.object not in objs
                        or p.triplet.predicate not in preds_vocab)
        if flagged:
            oov[vid] = flagged
    unknown.sort()
    if unknown:
        log.warning("%s: %d video ids not in ground truth were set aside", path, len(unknown))
    if oov:
        log.info("%s: %d predictions carry out-of-vocabulary labels",
                 path, sum(len(v) for v in oov.values()))
    return PredictionSet(predictions, tuple(unknown), oov, tuple(errors))


def prediction_to_json(p: Prediction) -> dict:
    return {
        "triplet": list(p.triplet),
        "score": p.score,
        "duration": [p.begin_fid, p.end_fid],
        "sub_traj": p.subject_traj.boxes.tolist(),
        "obj_traj": p.object_traj.boxes.tolist(),
    }


def dump_predictions(predictions: Mapping[str, Sequence[Prediction]] | PredictionSet, path) -> Path:
    if isinstance(predictions, PredictionSet):
        predictions = predictions.predictions
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # one video at a time keeps memory flat on large sets
    with open(path, "w", encoding="utf-8") as f:
        f.write('{"results": {')
        for k, vid in enumerate(sorted(predictions)):
            records = [prediction_to_json(p) for p in predictions[vid]]
            f.write(("" if k == 0 else ", ") + json.dumps(vid) + ": " + json.dumps(records, sort_keys=True))
        f.write("}}")
    return path


# ---------------------------------------------------------------- taxonomy

OTHER_GROUP = "other"
UNKNOWN_KIND = "unknown"
PREDICATE_KINDS = ("action", "spatial")
COCO_SUPER_CATEGORIES = ("person", "vehicle", "outdoor", "animal", "accessory", "sports",
                         "kitchen", "food", "furniture", "electronic", "appliance", "indoor")

# ImageNet-VidVRD predicates compose a verb with a spatial modifier
# ("walk_behind", "stand_next_to"); a predicate is spatial when every token
# is a spatial or comparative word.
_SPATIAL_TOKENS = frozenset("""
    above away behind beneath below beside front in inside left right next to toward towards
    past larger smaller taller shorter faster slower bigger
""".split())
_VIDVRD_STOP = frozenset({"of", "the", "with"})


def _vidvrd_predicate_kind(predicate: str) -> str:
    tokens = [t for t in re.split(r"[_\s]+", predicate.lower()) if t and t not in _VIDVRD_STOP]
    if tokens and all(t in _SPATIAL_TOKENS for t in tokens):
        return "spatial"
    return "action"


@dataclass
class Taxonomy:
    name: str
    object_groups: Mapping[str, str]
    predicate_kinds: Mapping[str, str]
    groups: tuple[str, ...] = COCO_SUPER_CATEGORIES + (OTHER_GROUP,)
    kinds: tuple[str, ...] = PREDICATE_KINDS
    kind_rule: Optional[object] = None
    _warned: set = field(default_factory=set, repr=False, compare=False)

    def super_category(self, category: str) -> str:
        group = self.object_groups.get(category)
        if group is None:
            if ("obj", category) not in self._warned:
                log.warning("taxonomy %s: category %r unmapped, using %r", self.name, category, OTHER_GROUP)
                self._warned.add(("obj", category))
            return OTHER_GROUP
        return group

    def predicate_kind(self, predicate: str) -> str:
        kind = self.predicate_kinds.get(predicate)
        if kind is None and self.kind_rule is not None:
            return self.kind_rule(predicate)
        if kind is None:
            if ("pred", predicate) not in self._warned:
                log.warning("taxonomy %s: predicate %r unmapped, using %r", self.name, predicate, UNKNOWN_KIND)
                self._warned.add(("pred", predicate))
            return UNKNOWN_KIND
        return kind


def _read_csv_map(text: str, source: str) -> dict[str, str]:
    out = {}
    for row in csv.reader(io.StringIO(text)):
        if not row or row[0].startswith("#"):
            continue
        if len(row) < 2:
            raise IngestionError(f"{source}: expected two columns, got {row!r}")
        label, group = row[0].strip(), row[1].strip()
        if label == "label" and group == "group":
            continue
        out[label] = group
    return out


def _builtin_csv(name: str) -> dict[str, str]:
    text = resources.files("vrd_diagnose").joinpath("data", name).read_text(encoding="utf-8")
    return _read_csv_map(text, name)


def load_taxonomy(source, predicates=None) -> Taxonomy:
    """Load a builtin taxonomy (``"vidor"``/``"vidvrd"``) or CSV mapping files.

    ``source`` may also be a directory holding ``objects.csv`` and
    ``predicates.csv``, or the objects CSV itself with ``predicates`` given
    separately.
    """
    if isinstance(source, str) and source in ("vidor", "vidvrd"):
        if source == "vidor":
            return Taxonomy("vidor", _builtin_csv("vidor_objects.csv"), _builtin_csv("vidor_predicates.csv"))
        return Taxonomy("vidvrd", _builtin_csv("vidvrd_objects.csv"), {}, kind_rule=_vidvrd_predicate_kind)
    path = Path(source)
    if path.is_dir():
        objects_path, predicates = path / "objects.csv", path / "predicates.csv"
    elif path.is_file():
        objects_path = path
    else:
        raise IngestionError(f"unknown taxonomy {source!r}: not a builtin name (vidor, vidvrd) or a path")
    objects = _read_csv_map(objects_path.read_text(encoding="utf-8"), str(objects_path))
    kinds = {}
    if predicates is not None and Path(predicates).exists():
        kinds = _read_csv_map(Path(predicates).read_text(encoding="utf-8"), str(predicates))
    groups = tuple(dict.fromkeys(list(COCO_SUPER_CATEGORIES) + sorted(set(objects.values())) + [OTHER_GROUP]))
    kind_names = tuple(dict.fromkeys(list(PREDICATE_KINDS) + sorted(set(kinds.values()))))
    return Taxonomy(path.stem, objects, kinds, groups=groups, kinds=kind_names)

