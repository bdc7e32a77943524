"""Domain types shared by the whole toolkit.

Geometry follows a continuous, half-open convention: a box covers
``[xmin, xmax) x [ymin, ymax)`` with area ``(xmax - xmin) * (ymax - ymin)``
and a trajectory covers frames ``[begin_fid, begin_fid + len(boxes))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def is_degenerate(self) -> bool:
        return not (self.xmax > self.xmin and self.ymax > self.ymin)

    def is_finite_nonnegative(self) -> bool:
        return all(math.isfinite(v) and v >= 0 for v in self.as_tuple())


class Trajectory:
    """Per-frame boxes over a contiguous frame interval.

    Boxes are held as a read-only ``(n, 4)`` float array in
    ``xmin, ymin, xmax, ymax`` column order. Construction only checks
    structure; geometric sanity is left to :func:`validate`.
    """

    __slots__ = ("begin_fid", "boxes")

    def __init__(self, begin_fid: int, boxes) -> None:
        arr = np.array(boxes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"boxes must have shape (n, 4), got {arr.shape}")
        if arr.shape[0] == 0:
            raise ValueError("trajectory must contain at least one box")
        if int(begin_fid) != begin_fid or begin_fid < 0:
            raise ValueError(f"begin_fid must be a non-negative integer, got {begin_fid!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "begin_fid", int(begin_fid))
        object.__setattr__(self, "boxes", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Trajectory is immutable")

    @property
    def end_fid(self) -> int:
        return self.begin_fid + self.boxes.shape[0]

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def box(self, i: int) -> BoundingBox:
        return BoundingBox(*(float(v) for v in self.boxes[i]))

    def box_at(self, fid: int) -> BoundingBox:
        if not self.begin_fid <= fid < self.end_fid:
            raise IndexError(f"frame {fid} outside [{self.begin_fid}, {self.end_fid})")
        return self.box(fid - self.begin_fid)

    def areas(self) -> np.ndarray:
        b = self.boxes
        return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])

    def mean_area(self) -> float:
        return float(self.areas().mean())

    def slice(self, begin_fid: int, end_fid: int) -> "Trajectory":
        if begin_fid < self.begin_fid or end_fid > self.end_fid or end_fid <= begin_fid:
            raise ValueError(
                f"[{begin_fid}, {end_fid}) is not a non-empty sub-interval of "
                f"[{self.begin_fid}, {self.end_fid})"
            )
        return Trajectory(begin_fid, self.boxes[begin_fid - self.begin_fid:end_fid - self.begin_fid])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.begin_fid == other.begin_fid and np.array_equal(self.boxes, other.boxes)

    def __hash__(self) -> int:
        return hash((self.begin_fid, self.boxes.tobytes()))

    def __repr__(self) -> str:
        return f"Trajectory(begin_fid={self.begin_fid}, n_frames={len(self)})"

    def __reduce__(self):
        return (Trajectory, (self.begin_fid, np.array(self.boxes)))


class Triplet(NamedTuple):
    subject: str
    predicate: str
    object: str

    def __str__(self) -> str:
        return f"<{self.subject}, {self.predicate}, {self.object}>"


@dataclass(frozen=True)
class RelationInstance:
    triplet: Triplet
    subject_traj: Trajectory
    object_traj: Trajectory
    video_id: str = ""
    subject_tid: int = -1
    object_tid: int = -1
    begin_fid: int = -1
    end_fid: int = -1

    @classmethod
    def from_trajectories(cls, triplet, subject_traj, object_traj, video_id="",
                          subject_tid=-1, object_tid=-1) -> "RelationInstance":
        return cls(Triplet(*triplet), subject_traj, object_traj, video_id,
                   subject_tid, object_tid, subject_traj.begin_fid, subject_traj.end_fid)

    @property
    def duration(self) -> int:
        return self.end_fid - self.begin_fid


@dataclass(frozen=True)
class Prediction:
    triplet: Triplet
    score: float
    subject_traj: Trajectory
    object_traj: Trajectory

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"prediction score must be finite, got {self.score!r}")
        if (self.subject_traj.begin_fid != self.object_traj.begin_fid
                or self.subject_traj.end_fid != self.object_traj.end_fid):
            raise ValueError("subject and object trajectories of a prediction must cover the same frames")

    @property
    def begin_fid(self) -> int:
        return self.subject_traj.begin_fid

    @property
    def end_fid(self) -> int:
        return self.subject_traj.end_fid


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    fps: Optional[float]
    frame_count: int
    width: int
    height: int
    objects: Mapping[int, str]
    ground_truth: tuple[RelationInstance, ...]
    # tid -> contiguous segments of that object's track
    tracks: Mapping[int, tuple[Trajectory, ...]] = field(default_factory=dict)

    def category(self, tid: int) -> str:
        return self.objects[tid]


@dataclass(frozen=True)
class Finding:
    """One violated invariant. ``severity`` is ``"error"`` or ``"warning"``."""

    code: str
    message: str
    where: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"[{self.severity}] {self.code} at {self.where}: {self.message}"


def _box_findings(traj: Trajectory, where: str, width: Optional[int] = None,
                  height: Optional[int] = None) -> list[Finding]:
    findings = []
    b = traj.boxes
    finite = np.isfinite(b).all(axis=1)
    for i in np.flatnonzero(~finite | (b < 0).any(axis=1)):
        findings.append(Finding("box_invalid_coordinates",
                                f"non-finite or negative coordinates {tuple(b[i])}",
                                f"{where} frame {traj.begin_fid + i}"))
    degenerate = finite & ~((b[:, 2] > b[:, 0]) & (b[:, 3] > b[:, 1]))
    for i in np.flatnonzero(degenerate):
        findings.append(Finding("box_degenerate",
                                f"degenerate box {tuple(b[i])} (needs xmax > xmin and ymax > ymin)",
                                f"{where} frame {traj.begin_fid + i}"))
    if width is not None and height is not None:
        outside = finite & ((b[:, 2] > width) | (b[:, 3] > height))
        for i in np.flatnonzero(outside):
            findings.append(Finding("box_out_of_frame",
                                    f"box {tuple(b[i])} exceeds frame {width}x{height}",
                                    f"{where} frame {traj.begin_fid + i}", severity="warning"))
    return findings


def validate(annotation: VideoAnnotation) -> list[Finding]:
    """Check every invariant of one video annotation; empty list means well-formed."""
    vid = annotation.video_id
    findings: list[Finding] = []
    if annotation.fps is not None and not (math.isfinite(annotation.fps) and annotation.fps > 0):
        findings.append(Finding("fps_invalid", f"fps must be > 0, got {annotation.fps}", vid))
    for tid, segments in sorted(annotation.tracks.items()):
        for traj in segments:
            findings.extend(_box_findings(traj, f"{vid} track {tid}", annotation.width, annotation.height))

    for k, rel in enumerate(annotation.ground_truth):
        where = f"{vid} relation {k} {rel.triplet}"
        for role, tid in (("subject", rel.subject_tid), ("object", rel.object_tid)):
            if tid not in annotation.objects:
                findings.append(Finding("unknown_tid", f"{role} tid {tid} not in object registry", where))
        for role, traj in (("subject", rel.subject_traj), ("object", rel.object_traj)):
            if traj.begin_fid != rel.begin_fid or traj.end_fid != rel.end_fid:
                findings.append(Finding(
                    "interval_mismatch",
                    f"{role} trajectory spans [{traj.begin_fid}, {traj.end_fid}) but relation "
                    f"spans [{rel.begin_fid}, {rel.end_fid})", where))
            # tracks were already checked above; only check relation boxes not backed by a track
            tid = rel.subject_tid if role == "subject" else rel.object_tid
            if tid not in annotation.tracks:
                findings.extend(_box_findings(traj, f"{where} {role}",
                                              annotation.width, annotation.height))
    return findings


def validate_all(annotations: Sequence[VideoAnnotation]) -> list[Finding]:
    out = []
    for ann in annotations:
        out.extend(validate(ann))
    return out
