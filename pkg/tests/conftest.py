from __future__ import annotations

import numpy as np
import pytest

from vrd_diagnose.data_model import Prediction, RelationInstance, Trajectory, Triplet, VideoAnnotation
from vrd_diagnose.ingestion import Dataset


def const_traj(begin: int, end: int, box=(0, 0, 10, 10)) -> Trajectory:
    return Trajectory(begin, np.tile(np.asarray(box, dtype=float), (end - begin, 1)))


def make_gt(triplet, begin=0, end=10, sbox=(0, 0, 10, 10), obox=(20, 20, 30, 30), vid="v"):
    return RelationInstance.from_trajectories(Triplet(*triplet), const_traj(begin, end, sbox),
                                              const_traj(begin, end, obox), video_id=vid)


def pred_from(g: RelationInstance, score: float, triplet=None) -> Prediction:
    return Prediction(Triplet(*triplet) if triplet else g.triplet, score, g.subject_traj, g.object_traj)


def make_dataset(gts_by_video: dict, fps=5.0, width=640, height=480) -> Dataset:
    videos = {}
    for vid, gts in gts_by_video.items():
        end = max([g.end_fid for g in gts], default=1)
        videos[vid] = VideoAnnotation(vid, fps, end, width, height, {}, tuple(gts), {})
    labels = {x for gts in gts_by_video.values() for g in gts for x in (g.triplet.subject, g.triplet.object)}
    preds = {g.triplet.predicate for gts in gts_by_video.values() for g in gts}
    return Dataset("custom", "test", videos, tuple(sorted(labels)), tuple(sorted(preds)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, aggregated over its tests
_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "outcomes": [], "notes": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcomes"].append(report.outcome)
        if report.skipped and isinstance(report.longrepr, tuple):
            entry["notes"].append(report.longrepr[2])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outcomes = entry["outcomes"]
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        note = f" ({'; '.join(entry['notes'])})" if status == "SKIP" and entry["notes"] else ""
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}{note}")
