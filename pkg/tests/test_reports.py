from __future__ import annotations

import json

import numpy as np

from songsieve.calibrate import CalibrationRow, CalibrationTable, LogisticModel, bootstrap_band
from songsieve.evaluate import MatchResult, classification_report, detection_metrics
from songsieve.reports import (
    calibration_json,
    comparison_rows,
    write_band_csv,
    write_calibration_csv,
    write_calibration_svg,
    write_classification_csv,
    write_comparison_csv,
    write_json,
    write_metrics_csv,
)

from reference_values import CALIBRATION_ROWS, CHANGES, COUNTS


def test_comparison_rows_reference_counts(tmp_path):
    for base, expected in CHANGES.items():
        rows = comparison_rows(COUNTS[base], COUNTS["detector"])
        assert [r["metric"] for r in rows] == ["TP", "FP", "FN"]
        assert {r["metric"].lower(): r["change_percent"] for r in rows} == expected
    rows = comparison_rows(COUNTS["finetuned_06"], COUNTS["detector"])
    text = write_comparison_csv(rows, tmp_path / "c.csv").read_text()
    assert text == "metric,old,new,change_percent\nTP,98,196,+100%\nFP,6,9,+50%\nFN,211,70,-67%\n"


def test_comparison_zero_baseline_and_tn():
    rows = comparison_rows({"tp": 0, "fp": 1, "fn": 1, "tn": 4}, {"tp": 1, "fp": 1, "fn": 1, "tn": 5})
    assert rows[0]["change_percent"] is None and rows[-1]["metric"] == "TN"


def test_metrics_csv(tmp_path):
    m = detection_metrics(MatchResult(196, 9, 70))
    lines = write_metrics_csv(m, tmp_path / "m.csv", {"map50": 0.5}).read_text().splitlines()
    assert lines == ["tp,fp,fn,tn,precision,recall,f1,accuracy,map50", "196,9,70,-,0.96,0.74,0.83,-,0.50"]


def test_calibration_csv_layout(tmp_path):
    rows = [CalibrationRow(p, lg, c, loss, 0) for p, lg, c, loss in CALIBRATION_ROWS]
    text = write_calibration_csv(CalibrationTable(rows, 100), tmp_path / "c.csv").read_text()
    assert text.splitlines() == [
        "probability_threshold,logit_score,confidence_score,tp_loss_percent",
        "0.40,-2.75,0.06,0.00",
        "0.60,-1.78,0.14,22.08",
        "0.80,-0.58,0.36,74.35",
        "0.95,1.30,0.79,99.03",
    ]
    model = LogisticModel(1.0, 2.0, 10, True, 4)
    blob = calibration_json(model, CalibrationTable(rows, 100))
    assert json.loads(json.dumps(blob))["rows"][1]["logit_score"] == -1.78


def test_classification_csv(tmp_path):
    pred = [("a", "A"), ("b", "A")]
    gt = [("a", "A"), ("b", "B")]
    report = classification_report(pred, gt, ["A", "B"])
    lines = write_classification_csv(report, tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "label,precision,recall,f1,support"
    assert lines[1] == "A,0.50,1.00,0.67,1"
    assert lines[3] == "accuracy,,,0.50,2"


def test_svg_and_band_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(0, 1, 200)
    y = (rng.random(200) < 1 / (1 + np.exp(-x))).astype(float)
    model = LogisticModel(0.0, 1.0, 200, True, 3)
    band = bootstrap_band((x, y), n_boot=20)
    a = write_calibration_svg(tmp_path / "a.svg", x, y, model, band, 0.6, 0.405)
    b = write_calibration_svg(tmp_path / "b.svg", x, y, model, band, 0.6, 0.405)
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()
    lines = write_band_csv(band, model, tmp_path / "band.csv").read_text().splitlines()
    assert lines[0] == "logit,fitted,lower,upper" and len(lines) == 102


def test_write_json_sorted(tmp_path):
    path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "x" / "o.json")
    assert path.read_text().startswith('{\n  "a"')
