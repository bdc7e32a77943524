"""Independent reference implementations used to cross-check the library."""
from __future__ import annotations

import numpy as np


def voxel_viou(a_begin: int, a_boxes, b_begin: int, b_boxes, width: int, height: int, frames: int) -> float:
    """vIoU by counting unit voxels on an integer grid."""
    def occupancy(begin, boxes):
        grid = np.zeros((frames, height, width), dtype=bool)
        for k, (x0, y0, x1, y1) in enumerate(boxes):
            grid[begin + k, int(y0):int(y1), int(x0):int(x1)] = True
        return grid

    ga, gb = occupancy(a_begin, a_boxes), occupancy(b_begin, b_boxes)
    union = np.logical_or(ga, gb).sum()
    return float(np.logical_and(ga, gb).sum() / union) if union else 0.0


def random_int_track(rng: np.random.Generator, width: int, height: int, frames: int):
    begin = int(rng.integers(0, frames))
    n = int(rng.integers(1, frames - begin + 1))
    boxes = []
    for _ in range(n):
        x0, x1 = sorted(rng.choice(width + 1, size=2, replace=False))
        y0, y1 = sorted(rng.choice(height + 1, size=2, replace=False))
        boxes.append((x0, y0, x1, y1))
    return begin, boxes


def hand_ap(hits, n_gt: int) -> float:
    """AP from the precision at each recall step, written out long-hand."""
    precisions = []
    tp = 0
    for rank, hit in enumerate(hits):
        tp += bool(hit)
        if hit:
            precisions.append(tp / (rank + 1))
    return sum(precisions) / n_gt


def greedy_oracle(scores, triplets_p, triplets_g, ov, top_k, thr):
    """Reference greedy matcher over an explicit overlap table.

    Returns the rank-ordered hit list and the set of matched GT indices.
    """
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:top_k]
    taken = set()
    hits = []
    for i in order:
        best, best_j = None, None
        for j in range(len(triplets_g)):
            if j in taken or triplets_g[j] != triplets_p[i] or ov[i][j] < thr:
                continue
            if best is None or ov[i][j] > best:
                best, best_j = ov[i][j], j
        hits.append(best_j is not None)
        if best_j is not None:
            taken.add(best_j)
    return hits, taken
