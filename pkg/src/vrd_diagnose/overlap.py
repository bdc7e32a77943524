"""Voluminal IoU between trajectories and the relation-level overlap score."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .data_model import Prediction, RelationInstance, Trajectory


_EMPTY_BOX = np.array([np.inf, np.inf, -np.inf, -np.inf])


def _intersection_areas(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    return np.clip(iw, 0, None) * np.clip(ih, 0, None)


def viou(a: Trajectory, b: Trajectory) -> float:
    """Voluminal IoU of two trajectories.

    Frames covered by both trajectories contribute their per-frame
    intersection and union; frames covered by only one contribute that
    box's full area to the union.
    """
    lo = max(a.begin_fid, b.begin_fid)
    hi = min(a.end_fid, b.end_fid)
    area_a = a.areas()
    area_b = b.areas()
    if hi <= lo:
        return 0.0
    sa = slice(lo - a.begin_fid, hi - a.begin_fid)
    sb = slice(lo - b.begin_fid, hi - b.begin_fid)
    inter = _intersection_areas(a.boxes[sa], b.boxes[sb])
    union_common = area_a[sa] + area_b[sb] - inter
    only_a = area_a.sum() - area_a[sa].sum()
    only_b = area_b.sum() - area_b[sb].sum()
    denom = union_common.sum() + only_a + only_b
    if denom <= 0:
        return 0.0
    return float(inter.sum() / denom)


def pair_overlap(p: Prediction | RelationInstance, g: RelationInstance) -> float:
    """Minimum of subject and object vIoU. Labels are ignored."""
    return min(viou(p.subject_traj, g.subject_traj), viou(p.object_traj, g.object_traj))


def viou_matrix(rows: Sequence[Trajectory], cols: Sequence[Trajectory]) -> np.ndarray:
    """vIoU for every ``(row, col)`` pair, vectorized over rows.

    Row trajectories are laid out on a dense frame grid padded with an
    inverted infinite box, whose intersection with any box is empty.
    """
    n, m = len(rows), len(cols)
    out = np.zeros((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    f0 = min(t.begin_fid for t in rows)
    f1 = max(t.end_fid for t in rows)
    dense = np.empty((n, f1 - f0, 4), dtype=np.float64)
    dense[...] = _EMPTY_BOX
    row_area = np.empty(n, dtype=np.float64)
    for i, t in enumerate(rows):
        dense[i, t.begin_fid - f0:t.end_fid - f0] = t.boxes
        row_area[i] = t.areas().sum()
    for j, c in enumerate(cols):
        lo = max(c.begin_fid, f0)
        hi = min(c.end_fid, f1)
        if hi <= lo:
            continue
        seg = dense[:, lo - f0:hi - f0]
        cb = c.boxes[lo - c.begin_fid:hi - c.begin_fid]
        inter = _intersection_areas(seg, cb[None]).sum(axis=1)
        denom = row_area + c.areas().sum() - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            out[:, j] = np.where(denom > 0, inter / denom, 0.0)
    return out


def overlap_matrix(preds: Sequence[Prediction | RelationInstance],
                   gts: Sequence[RelationInstance]) -> np.ndarray:
    """``ov[i, j] = pair_overlap(preds[i], gts[j])`` for all pairs."""
    sub = viou_matrix([p.subject_traj for p in preds], [g.subject_traj for g in gts])
    obj = viou_matrix([p.object_traj for p in preds], [g.object_traj for g in gts])
    return np.minimum(sub, obj)
