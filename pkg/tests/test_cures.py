from __future__ import annotations

import pytest

from vrd_diagnose.cures import CURE_TYPES, apply_cure, parse_error_type, sensitivity_report
from vrd_diagnose.data_model import Prediction
from vrd_diagnose.diagnosis import FP_TYPES, ErrorType, error_breakdown
from vrd_diagnose.evaluation import MatchConfig, average_precision, evaluate, match_video
from vrd_diagnose.fixtures import (InjectionSpec, generate_dataset, noisy_predictions, perfect_predictions, perturb,
                                   shift_for_overlap)

from conftest import make_dataset, make_gt, pred_from
from oracles import hand_ap

T = ("person", "ride", "horse")
E = ErrorType


def test_background_above_tp_hand_case():
    g = make_gt(T, 0, 10, vid="v")
    bg = pred_from(make_gt(T, 20, 30), 0.9)
    ds = make_dataset({"v": [g]})
    preds = {"v": (bg, pred_from(g, 0.5))}
    assert evaluate(ds, preds).mean_ap == pytest.approx(0.5)
    out = apply_cure(ds, preds, error_type="background")
    assert out.row.cured_map == 1.0 and out.row.removed == 1
    assert out.predictions.get("v") == (preds["v"][1],)


def test_classification_only_fixture():
    ds = generate_dataset(3, 4, seed=6)
    pert = perturb(ds, InjectionSpec(counts={E.CLASSIFICATION: 5}, seed=2))
    out = apply_cure(ds, pert.predictions, error_type=E.CLASSIFICATION)
    assert out.row.corrected == 5
    assert out.row.cured_map == pytest.approx(1.0, abs=1e-12)
    assert evaluate(out.dataset, out.predictions).mean_ap == out.row.cured_map


def test_double_detection_only_fixture():
    ds = generate_dataset(3, 4, seed=6)
    pert = perturb(ds, InjectionSpec(counts={E.DOUBLE_DETECTION: 4}, seed=3))
    report = sensitivity_report(ds, pert.predictions)
    assert report.row("double_detection").gain >= 0
    for kind in FP_TYPES:
        if kind is not E.DOUBLE_DETECTION:
            assert report.row(kind).gain == 0


def test_perfect_predictions_have_zero_gains():
    ds = generate_dataset(3, 4, seed=6)
    report = sensitivity_report(ds, perfect_predictions(ds))
    assert report.baseline_map == 1.0
    assert [r.gain for r in report.rows] == [0.0] * len(CURE_TYPES)


def test_missed_cure_matches_hand_oracle():
    ds = generate_dataset(4, 5, seed=12)
    pert = perturb(ds, InjectionSpec(counts={E.BACKGROUND: 6}, missed=5, seed=4))
    ev = evaluate(ds, pert.predictions)
    out = apply_cure(ds, pert.predictions, error_type="missed_ground_truth", evaluation=ev)
    aps = []
    for vid, v in ev.videos.items():
        n = v.match.n_gt - int((~v.match.gt_matched).sum())
        if n:
            aps.append(hand_ap(v.match.hits.tolist(), n))
            assert aps[-1] >= v.ap
    assert out.row.cured_map == pytest.approx(sum(aps) / len(aps), abs=1e-12)
    assert out.row.gts_dropped == 5
    assert out.dataset.relation_count == ds.relation_count - 5


def test_sensitivity_rows_sorted_by_gain():
    ds = generate_dataset(5, 5, seed=1)
    spec = InjectionSpec(counts={E.BACKGROUND: 4, E.LOCALIZATION: 2, E.CONFUSION: 1}, missed=2, seed=9)
    report = sensitivity_report(ds, perturb(ds, spec).predictions)
    gains = [r.gain for r in report.rows]
    assert gains == sorted(gains, reverse=True)
    assert {r.error_type for r in report.rows} == {str(t) for t in CURE_TYPES}
    assert report.to_dict()["baseline_map"] == report.baseline_map


def test_parse_error_type():
    assert parse_error_type("Background") is E.BACKGROUND
    with pytest.raises(ValueError, match="unknown error type"):
        parse_error_type("tiredness")
    with pytest.raises(ValueError, match="no cure"):
        parse_error_type(E.TRUE_POSITIVE)


def test_localization_cure_snaps_trajectory():
    g = make_gt(T, 0, 10, vid="v")
    loose = Prediction(g.triplet, 0.9, shift_for_overlap(g.subject_traj, 0.3), shift_for_overlap(g.object_traj, 0.3))
    ds = make_dataset({"v": [g]})
    out = apply_cure(ds, {"v": (loose,)}, error_type="localization")
    (fixed,) = out.predictions.get("v")
    assert fixed.subject_traj == g.subject_traj and fixed.object_traj == g.object_traj
    assert out.row.cured_map == 1.0


def test_correction_dedupes_against_existing_tp():
    g = make_gt(T, 0, 10, vid="v")
    ds = make_dataset({"v": [g]})
    wrong = pred_from(g, 0.9, ("person", "feed", "horse"))
    right = pred_from(g, 0.4)
    out = apply_cure(ds, {"v": (wrong, right)}, error_type="classification")
    assert out.row.corrected == 1 and out.row.removed == 1
    (kept,) = out.predictions.get("v")
    assert kept.score == 0.9 and kept.triplet == g.triplet


@pytest.fixture(scope="module")
def noisy():
    ds = generate_dataset(12, 6, n_objects=4, n_predicates=3, seed=31, length_range_sec=(1, 5))
    return ds, noisy_predictions(ds, 40, seed=6)


@pytest.mark.parametrize("kind", CURE_TYPES, ids=str)
def test_monotone_and_idempotent(noisy, kind):
    ds, preds = noisy
    base = evaluate(ds, preds)
    once = apply_cure(ds, preds, error_type=kind, evaluation=base)
    assert once.row.gain >= -1e-12
    twice = apply_cure(once.dataset, once.predictions, error_type=kind)
    assert twice.row.cured_map == pytest.approx(once.row.cured_map, abs=1e-12)
    assert twice.row.gain == pytest.approx(0.0, abs=1e-12)
    # the cured type is gone after the cure
    if kind in FP_TYPES:
        assert error_breakdown(once.dataset, once.predictions).counts[str(kind)] == 0


def test_missed_cure_never_lowers_video_ap(noisy):
    ds, preds = noisy
    ev = evaluate(ds, preds)
    for v in ev.videos.values():
        missed = int((~v.match.gt_matched).sum())
        if v.match.n_gt - missed > 0:
            assert average_precision(v.match, v.match.n_gt - missed) >= v.ap


def test_cured_set_holds_only_kept_predictions():
    g = make_gt(T, 0, 10, vid="v")
    ds = make_dataset({"v": [g]})
    preds = {"v": tuple(pred_from(g, s / 10, ("a", "b", "c")) for s in range(1, 6))}
    out = apply_cure(ds, preds, MatchConfig(top_k=3), error_type="background")
    assert len(out.predictions.get("v")) == 3
    assert match_video(out.predictions.get("v"), [g]).n_discarded == 0
