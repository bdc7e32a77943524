from __future__ import annotations

import csv
import json

import pytest

from vrd_diagnose import __version__
from vrd_diagnose.cli import EXIT_CONFIG, EXIT_FINDINGS, EXIT_INPUT, EXIT_OK, EXIT_USAGE, main

REPORTS = ("summary.json", "per_video_ap.csv", "fp_breakdown.json", "fn_characteristics.json",
           "map_gain_characteristics.csv", "cure_sensitivity.json", "bias_report.json")


def make_fixture(root, *inject, missed=0, videos=6):
    args = ["fixtures", "--out", str(root), "--videos", str(videos), "--relations", "4", "--train-videos", "4",
            "--seed", "3", "--missed", str(missed)]
    for item in inject:
        args += ["--inject", item]
    assert main(args) == EXIT_OK
    return root


def diagnose(fx, out, *extra):
    return main(["diagnose", "--groundtruth", str(fx / "eval"), "--predictions", str(fx / "predictions.json"),
                 "--train-groundtruth", str(fx / "train"), "--out", str(out), "--jobs", "1", *extra])


@pytest.fixture(scope="module")
def perfect(tmp_path_factory):
    return make_fixture(tmp_path_factory.mktemp("perfect"))


@pytest.fixture(scope="module")
def injected(tmp_path_factory):
    return make_fixture(tmp_path_factory.mktemp("injected"), "background=5", "localization=2", "confusion=2",
                        missed=2)


def test_evaluate_prints_map(perfect, tmp_path, capsys):
    rc = main(["evaluate", "--groundtruth", str(perfect / "eval"), "--predictions",
               str(perfect / "predictions.json"), "--out", str(tmp_path)])
    assert rc == EXIT_OK
    assert "mAP 1.000000" in capsys.readouterr().out
    rows = list(csv.DictReader(open(tmp_path / "per_video_ap.csv")))
    assert len(rows) == 6 and all(float(r["ap"]) == 1.0 for r in rows)


def test_diagnose_perfect_fixture(perfect, tmp_path):
    assert diagnose(perfect, tmp_path, "--charts") == EXIT_OK
    for name in REPORTS:
        assert (tmp_path / name).exists(), name
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["mean_ap"] == 1.0
    assert summary["version"] == __version__
    assert summary["config"]["top_k"] == 200 and "generated_at" not in summary
    fp = json.loads((tmp_path / "fp_breakdown.json").read_text())
    assert sum(fp["counts"].values()) == 0
    charts = sorted(p.name for p in (tmp_path / "charts").iterdir())
    assert charts == ["cure_sensitivity.svg", "fn_characteristics.svg", "fp_breakdown.svg",
                      "map_gain_characteristics.svg"]


def test_diagnose_records_injected_background(injected, tmp_path):
    assert diagnose(injected, tmp_path) == EXIT_OK
    fp = json.loads((tmp_path / "fp_breakdown.json").read_text())
    assert fp["counts"]["background"] == 5
    assert fp["missed_ground_truth"]["count"] == 2
    cures = json.loads((tmp_path / "cure_sensitivity.json").read_text())
    assert {c["error_type"] for c in cures["cures"]} >= {"background", "missed_ground_truth"}


def test_top_k_is_recorded(injected, tmp_path):
    assert diagnose(injected, tmp_path, "--top-k", "3") == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["top_k"] == 3
    assert summary["truncation"]["top_k"] == 3
    assert summary["truncation"]["discarded_predictions"] > 0


def test_reports_are_byte_identical_across_runs_and_jobs(injected, tmp_path):
    names = REPORTS + ("charts/fp_breakdown.svg", "charts/cure_sensitivity.svg")
    snapshots = []
    for jobs in ("1", "2", "1"):
        assert main(["diagnose", "--groundtruth", str(injected / "eval"), "--predictions",
                     str(injected / "predictions.json"), "--train-groundtruth", str(injected / "train"),
                     "--out", str(tmp_path), "--jobs", jobs, "--charts"]) == EXIT_OK
        snapshots.append({name: (tmp_path / name).read_bytes() for name in names})
    assert snapshots[0] == snapshots[1] == snapshots[2]


def test_timestamp_is_opt_in(injected, tmp_path):
    assert diagnose(injected, tmp_path, "--timestamp") == EXIT_OK
    assert "generated_at" in json.loads((tmp_path / "summary.json").read_text())


def test_bias_command(injected, tmp_path, capsys):
    rc = main(["bias", "--groundtruth", str(injected / "eval"), "--train-groundtruth", str(injected / "train"),
               "--out", str(tmp_path), "--taxonomy", "vidor"])
    assert rc == EXIT_OK
    assert "bias accuracy" in capsys.readouterr().out
    report = json.loads((tmp_path / "bias_report.json").read_text())
    assert report["random_baseline"] == pytest.approx(1 / 8)
    assert report["cooccurrence"]["total"] == 16
    assert (tmp_path / "cooccurrence_unknown.csv").exists()


def test_validate_reports_findings(tmp_path, capsys):
    make_fixture(tmp_path / "fx")
    assert main(["validate", "--groundtruth", str(tmp_path / "fx" / "eval")]) == EXIT_OK
    f = sorted((tmp_path / "fx" / "eval").iterdir())[0]
    rec = json.loads(f.read_text())
    box = next(b for frame in rec["trajectories"] for b in frame)["bbox"]
    box["xmax"] = box["xmin"]
    f.write_text(json.dumps(rec))
    capsys.readouterr()
    assert main(["validate", "--groundtruth", str(tmp_path / "fx" / "eval")]) == EXIT_FINDINGS
    assert "box_degenerate" in capsys.readouterr().out


def test_exit_codes(perfect, tmp_path):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["evaluate", "--groundtruth", str(perfect / "eval")]) == EXIT_USAGE
    base = ["evaluate", "--groundtruth", str(perfect / "eval"), "--predictions", str(perfect / "predictions.json"),
            "--out", str(tmp_path)]
    assert main(base + ["--top-k", "0"]) == EXIT_CONFIG
    assert main(base + ["--viou-threshold", "1.5"]) == EXIT_CONFIG
    assert main(["evaluate", "--groundtruth", str(tmp_path / "missing"), "--predictions", "x.json"]) == EXIT_CONFIG
    # diagnose with training counts but no training split
    assert main(["diagnose", "--groundtruth", str(perfect / "eval"), "--predictions",
                 str(perfect / "predictions.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(base[:3] + ["--predictions", str(bad), "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["fixtures", "--out", str(tmp_path / "f"), "--inject", "sleepiness=2"]) == EXIT_CONFIG
    assert main(["fixtures", "--out", str(tmp_path / "f"), "--videos", "1", "--relations", "1",
                 "--inject", "double_detection=5"]) == EXIT_CONFIG


def test_count_source_eval_needs_no_training_split(perfect, tmp_path):
    rc = main(["diagnose", "--groundtruth", str(perfect / "eval"), "--predictions", str(perfect / "predictions.json"),
               "--out", str(tmp_path), "--count-source", "eval"])
    assert rc == EXIT_OK
    assert json.loads((tmp_path / "summary.json").read_text())["bias"] is None
    assert not (tmp_path / "bias_report.json").exists()
