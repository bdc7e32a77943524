"""SVG charts rendered purely from the JSON/CSV reports in an output directory."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no date keep the SVG bytes stable across runs
plt.rcParams["svg.hashsalt"] = "vrd-diagnose"
_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def fp_chart(report: dict, path: Path) -> Path:
    ratios = report["ratios"]
    labels = list(ratios)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    values = [ratios[k] for k in labels]
    if sum(values) > 0:
        ax1.pie(values, labels=labels, autopct="%1.1f%%")
    ax1.set_title("False positives by type")
    ax2.bar(["detected", "missed"], [report["missed_ground_truth"]["total_gt"] - report["missed_ground_truth"]["count"],
                                     report["missed_ground_truth"]["count"]])
    ax2.set_title("Ground truth coverage")
    return _save(fig, path)


def fn_chart(report: dict, path: Path) -> Path:
    chars = report["characteristics"]
    fig, axes = plt.subplots(1, len(chars), figsize=(3 * len(chars), 3.5), squeeze=False)
    for ax, (name, bins) in zip(axes[0], chars.items()):
        ax.bar(list(bins), [b["ratio"] or 0.0 for b in bins.values()])
        ax.set_ylim(0, 1)
        ax.set_title(name)
    axes[0][0].set_ylabel("missed ratio")
    return _save(fig, path)


def gain_chart(rows: list[dict], path: Path) -> Path:
    chars = list(dict.fromkeys(r["characteristic"] for r in rows))
    fig, axes = plt.subplots(1, len(chars), figsize=(3 * len(chars), 3.5), squeeze=False)
    for ax, c in zip(axes[0], chars):
        sub = [r for r in rows if r["characteristic"] == c]
        ax.bar([r["bin"] for r in sub], [float(r["gain"]) for r in sub])
        ax.set_title(c)
    axes[0][0].set_ylabel("mAP gain")
    return _save(fig, path)


def cure_chart(report: dict, path: Path) -> Path:
    rows = report["cures"]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.barh([r["error_type"] for r in rows][::-1], [r["gain"] for r in rows][::-1])
    ax.set_xlabel("mAP gain")
    ax.set_title(f"Cure sensitivity (baseline mAP {report['baseline_map']:.4f})")
    return _save(fig, path)


def render_charts(out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    charts = out_dir / "charts"
    charts.mkdir(exist_ok=True)
    written = []
    if (out_dir / "fp_breakdown.json").exists():
        written.append(fp_chart(json.loads((out_dir / "fp_breakdown.json").read_text()), charts / "fp_breakdown.svg"))
    if (out_dir / "fn_characteristics.json").exists():
        written.append(fn_chart(json.loads((out_dir / "fn_characteristics.json").read_text()),
                                charts / "fn_characteristics.svg"))
    if (out_dir / "map_gain_characteristics.csv").exists():
        with open(out_dir / "map_gain_characteristics.csv", newline="") as f:
            written.append(gain_chart(list(csv.DictReader(f)), charts / "map_gain_characteristics.svg"))
    if (out_dir / "cure_sensitivity.json").exists():
        written.append(cure_chart(json.loads((out_dir / "cure_sensitivity.json").read_text()),
                                  charts / "cure_sensitivity.svg"))
    return written
