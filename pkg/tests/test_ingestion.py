from __future__ import annotations

import json
import logging
import shutil

import pytest

from vrd_diagnose.data_model import validate_all
from vrd_diagnose.fixtures import generate_dataset
from vrd_diagnose.ingestion import (IngestionError, dump_ground_truth, dump_predictions, load_ground_truth,
                                    load_predictions, load_taxonomy, parse_video_annotation)


def _box(x0, y0, x1, y1):
    return {"xmin": x0, "ymin": y0, "xmax": x1, "ymax": y1}


def vidor_record(vid="0001/1234", n=4, extra_relation=None):
    frames = [[{"tid": 0, "bbox": _box(0, 0, 10, 10)}, {"tid": 1, "bbox": _box(20, 20, 40, 50)}]
              for _ in range(n)]
    rels = [{"subject_tid": 0, "object_tid": 1, "predicate": "lean_on", "begin_fid": 0, "end_fid": n}]
    if extra_relation:
        rels.append(extra_relation)
    return {"video_id": vid, "fps": 29.97, "frame_count": n, "width": 640, "height": 480,
            "subject/objects": [{"tid": 0, "category": "adult"}, {"tid": 1, "category": "car"}],
            "trajectories": frames, "relation_instances": rels}


def test_directory_with_two_files(tmp_path):
    for i, vid in enumerate(("b", "a")):
        (tmp_path / f"{i}.json").write_text(json.dumps(vidor_record(vid)))
    ds = load_ground_truth(tmp_path, "vidor", "validation")
    assert list(ds.videos) == ["a", "b"]
    rel = ds.videos["a"].ground_truth[0]
    assert tuple(rel.triplet) == ("adult", "lean_on", "car")
    assert (rel.begin_fid, rel.end_fid) == (0, 4)
    assert rel.object_traj.mean_area() == 600
    assert ds.object_vocab == ("adult", "car") and ds.predicate_vocab == ("lean_on",)


def test_empty_directory(tmp_path):
    ds = load_ground_truth(tmp_path)
    assert len(ds) == 0 and ds.relation_count == 0


def test_unknown_tid_is_named(tmp_path):
    bad = vidor_record(extra_relation={"subject_tid": 0, "object_tid": 7, "predicate": "watch",
                                       "begin_fid": 0, "end_fid": 2})
    (tmp_path / "x.json").write_text(json.dumps(bad))
    with pytest.raises(IngestionError, match="tid 7"):
        load_ground_truth(tmp_path)


def test_relation_outside_track_is_rejected():
    bad = vidor_record(extra_relation={"subject_tid": 0, "object_tid": 1, "predicate": "watch",
                                       "begin_fid": 2, "end_fid": 6})
    with pytest.raises(IngestionError, match="tid 0"):
        parse_video_annotation(bad)


def test_malformed_file_names_file_and_field(tmp_path):
    rec = vidor_record()
    del rec["width"]
    (tmp_path / "broken.json").write_text(json.dumps(rec))
    with pytest.raises(IngestionError, match=r"broken\.json.*width"):
        load_ground_truth(tmp_path)
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(IngestionError, match="broken.json"):
        load_ground_truth(tmp_path)


def test_duplicate_video_id(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps(vidor_record("same")))
    (tmp_path / "b.json").write_text(json.dumps(vidor_record("same")))
    with pytest.raises(IngestionError, match="duplicate video_id"):
        load_ground_truth(tmp_path)


def test_aggregate_file_layouts(tmp_path):
    recs = [vidor_record("x"), vidor_record("y")]
    (tmp_path / "list.json").write_text(json.dumps(recs))
    (tmp_path / "map.json").write_text(json.dumps({r["video_id"]: r for r in recs}))
    assert list(load_ground_truth(tmp_path / "list.json").videos) == ["x", "y"]
    assert list(load_ground_truth(tmp_path / "map.json").videos) == ["x", "y"]


def test_boxes_are_clamped_with_warning(caplog):
    rec = vidor_record()
    rec["trajectories"][0][0]["bbox"] = _box(-5, 0, 10, 500)
    with caplog.at_level(logging.WARNING):
        ann = parse_video_annotation(rec)
    assert ann.ground_truth[0].subject_traj.boxes[0].tolist() == [0, 0, 10, 480]
    assert "clamped 1" in caplog.text


def test_track_with_gap_is_split_into_segments():
    rec = vidor_record(n=6)
    rec["trajectories"][3] = [e for e in rec["trajectories"][3] if e["tid"] != 0]
    rec["relation_instances"] = [{"subject_tid": 0, "object_tid": 1, "predicate": "p",
                                  "begin_fid": 4, "end_fid": 6}]
    ann = parse_video_annotation(rec)
    assert [(s.begin_fid, s.end_fid) for s in ann.tracks[0]] == [(0, 3), (4, 6)]
    assert ann.ground_truth[0].subject_traj.begin_fid == 4


def test_explicit_vocabulary_is_enforced(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps(vidor_record()))
    with pytest.raises(IngestionError, match="not in vocabulary"):
        load_ground_truth(tmp_path, object_vocab=["adult"], predicate_vocab=["lean_on"])


def test_round_trip_and_load_order(tmp_path):
    ds = generate_dataset(5, 3, seed=4, split="eval")
    dump_ground_truth(ds, tmp_path / "a")
    again = load_ground_truth(tmp_path / "a", split="eval")
    assert again.videos == ds.videos
    assert again.object_vocab == ds.object_vocab and again.predicate_vocab == ds.predicate_vocab
    # same files under shuffled names load identically
    (tmp_path / "b").mkdir()
    for k, f in enumerate(sorted((tmp_path / "a").iterdir(), reverse=True)):
        shutil.copy(f, tmp_path / "b" / f"{k:02d}.json")
    assert load_ground_truth(tmp_path / "b", split="eval").videos == again.videos
    assert validate_all(list(again.videos.values())) == []


def _pred_record(n_boxes=30, duration=(0, 30), score=0.7, triplet=("adult", "lean_on", "car")):
    boxes = [[0, 0, 10, 10]] * n_boxes
    return {"triplet": list(triplet), "score": score, "duration": list(duration),
            "sub_traj": boxes, "obj_traj": boxes}


def _write_preds(path, results):
    path.write_text(json.dumps({"version": "VERSION 1.0", "results": results, "external_data": {}}))
    return path


def test_prediction_records(tmp_path):
    (tmp_path / "gt").mkdir()
    (tmp_path / "gt" / "v.json").write_text(json.dumps(vidor_record("v")))
    ds = load_ground_truth(tmp_path / "gt")
    path = _write_preds(tmp_path / "p.json", {"v": [_pred_record(), _pred_record(triplet=("x", "y", "z"))],
                                              "ghost": [_pred_record()]})
    ps = load_predictions(path, ds)
    p = ps.get("v")[0]
    assert p.subject_traj.begin_fid == 0 and len(p.subject_traj) == 30
    assert ps.unknown_videos == ("ghost",)
    assert ps.out_of_vocab == {"v": (1,)}
    assert len(ps) == 2


@pytest.mark.parametrize("record, message", [
    (_pred_record(n_boxes=29), "29 boxes"),
    (_pred_record(score=float("inf")), "non-finite score"),
    (_pred_record(duration=(5, 5), n_boxes=0), "zero-length"),
])
def test_bad_prediction_records(tmp_path, record, message):
    (tmp_path / "gt").mkdir()
    (tmp_path / "gt" / "v.json").write_text(json.dumps(vidor_record("v")))
    ds = load_ground_truth(tmp_path / "gt")
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"results": {"v": [record, _pred_record()]}}).replace("Infinity", "1e999"))
    with pytest.raises(IngestionError, match=message):
        load_predictions(path, ds)
    lenient = load_predictions(path, ds, strict=False)
    assert len(lenient.get("v")) == 1 and len(lenient.errors) == 1


def test_prediction_file_layout_errors(tmp_path):
    ds = generate_dataset(1, 1, seed=0)
    vid = next(iter(ds.videos))
    for text in ('{"version": 1}', "[]", '{"results": {"a": [1, 2]', '{"results": {"%s": 5}}' % vid):
        (tmp_path / "p.json").write_text(text)
        with pytest.raises(IngestionError):
            load_predictions(tmp_path / "p.json", ds)
    (tmp_path / "p.json").write_text('{"results": {"%s": [], "%s": []}}' % (vid, vid))
    with pytest.raises(IngestionError, match="twice"):
        load_predictions(tmp_path / "p.json", ds)


def test_prediction_round_trip(tmp_path):
    from vrd_diagnose.fixtures import noisy_predictions
    ds = generate_dataset(3, 2, seed=1)
    preds = noisy_predictions(ds, 5, seed=3)
    again = load_predictions(dump_predictions(preds, tmp_path / "p.json"), ds)
    assert again.predictions == preds.predictions


def test_builtin_taxonomies(caplog):
    vidor = load_taxonomy("vidor")
    assert vidor.super_category("dog") == "animal"
    assert vidor.predicate_kind("towards") == "spatial"
    assert vidor.predicate_kind("hug") == "action"
    with caplog.at_level(logging.WARNING):
        assert vidor.super_category("widget") == "other"
    assert "widget" in caplog.text
    vidvrd = load_taxonomy("vidvrd")
    assert vidvrd.super_category("zebra") == "animal"
    assert vidvrd.predicate_kind("move_toward") == "action"
    assert vidvrd.predicate_kind("stand_front_of") == "action"
    assert vidvrd.predicate_kind("behind") == "spatial"
    assert vidvrd.predicate_kind("larger") == "spatial"


def test_custom_taxonomy_directory(tmp_path):
    (tmp_path / "objects.csv").write_text("label,group\nwidget,tools\n")
    (tmp_path / "predicates.csv").write_text("label,group\nturns,action\n")
    tax = load_taxonomy(tmp_path)
    assert tax.super_category("widget") == "tools" and "tools" in tax.groups
    assert tax.predicate_kind("turns") == "action"
    assert tax.predicate_kind("spins") == "unknown"
    with pytest.raises(IngestionError):
        load_taxonomy("no-such-taxonomy")
