"""Writers for evaluation and calibration artifacts.

JSON keeps full precision; CSV tables are rounded the way the result tables
are printed (2 decimals for metrics, integer percents for changes).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .calibrate import BootstrapBand, CalibrationTable, LogisticModel
from .evaluate import ClassificationReport, DetectionMetrics, percentage_change, round_half_up


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _writer(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _r2(x: float | None) -> str:
    return "-" if x is None else f"{round_half_up(x, 2):.2f}"


def write_metrics_csv(metrics: DetectionMetrics, path: str | Path, extra: Mapping[str, float] | None = None) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        head = ["tp", "fp", "fn", "tn", "precision", "recall", "f1", "accuracy"]
        row = [metrics.tp, metrics.fp, metrics.fn, "-" if metrics.tn is None else metrics.tn,
               _r2(metrics.precision), _r2(metrics.recall), _r2(metrics.f1), _r2(metrics.accuracy)]
        for k, v in (extra or {}).items():
            head.append(k)
            row.append(_r2(v) if isinstance(v, float) else v)
        w.writerow(head)
        w.writerow(row)
    return path


def comparison_rows(old: Mapping, new: Mapping) -> list[dict]:
    """Percentage change of TP/FP/FN (and TN when both sides have it)."""
    rows = []
    for key in ("tp", "fp", "fn", "tn"):
        a, b = old.get(key), new.get(key)
        if a is None or b is None:
            if key == "tn":
                continue
            raise KeyError(f"missing {key!r} count")
        change = percentage_change(b, a) if a != 0 else None
        rows.append({
            "metric": key.upper(),
            "old": a,
            "new": b,
            "change_percent": None if change is None else int(round_half_up(change)),
            "change_exact": change,
        })
    return rows


def write_comparison_csv(rows: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(["metric", "old", "new", "change_percent"])
        for r in rows:
            pct = "-" if r["change_percent"] is None else f"{r['change_percent']:+d}%"
            w.writerow([r["metric"], r["old"], r["new"], pct])
    return path


def write_classification_csv(report: ClassificationReport, path: str | Path) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(["label", "precision", "recall", "f1", "support"])
        for r in report.rows:
            if r.support > 0:
                w.writerow([r.label, _r2(r.precision), _r2(r.recall), _r2(r.f1), r.support])
        w.writerow(["accuracy", "", "", _r2(report.accuracy), report.n_items])
        w.writerow(["macro avg", *map(_r2, report.macro_avg), report.n_items])
        w.writerow(["weighted avg", *map(_r2, report.weighted_avg), report.n_items])
        w.writerow(["idx_pred_ann", "", "", f"{round_half_up(report.idx_pred_ann, 4):.4f}", report.n_predictions])
    return path


def write_confusion_csv(matrix: np.ndarray, labels: Sequence[str], path: str | Path, normalized: bool) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(["gt\\pred", *labels])
        for lab, row in zip(labels, matrix):
            w.writerow([lab, *(f"{v:.4f}" if normalized else str(int(v)) for v in row)])
    return path


def write_calibration_csv(table: CalibrationTable, path: str | Path) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    with fh:
        w.writerow(["probability_threshold", "logit_score", "confidence_score", "tp_loss_percent"])
        for r in table.rows:
            w.writerow([f"{r.probability_threshold:.2f}", _r2(r.logit_score), _r2(r.confidence_score), _r2(r.tp_loss_percent)])
    return path


def calibration_json(model: LogisticModel, table: CalibrationTable) -> dict:
    return {
        "model": model.as_dict(),
        "tp_baseline": table.tp_baseline,
        "rows": [r.__dict__ for r in table.rows],
    }


def write_band_csv(band: BootstrapBand, model: LogisticModel, path: str | Path) -> Path:
    path = Path(path)
    fh, w = _writer(path)
    fitted = model.predict(band.grid)
    with fh:
        w.writerow(["logit", "fitted", "lower", "upper"])
        for x, f, lo, hi in zip(band.grid, fitted, band.lower, band.upper):
            w.writerow([repr(float(x)), repr(float(f)), repr(float(lo)), repr(float(hi))])
    return path


def write_calibration_svg(
    path: str | Path,
    logits: np.ndarray,
    outcomes: np.ndarray,
    model: LogisticModel,
    band: BootstrapBand | None,
    target: float,
    logit_star: float,
) -> Path:
    """Outcome scatter over logit with the fitted curve and its bootstrap band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "songsieve"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lo = min(float(np.min(logits)), logit_star) - 0.5
    hi = max(float(np.max(logits)), logit_star) + 0.5
    grid = np.linspace(lo, hi, 200)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(logits, outcomes, s=10, c="black", alpha=0.3, linewidths=0)
    ax.plot(grid, model.predict(grid), color="tab:blue")
    if band is not None:
        ax.fill_between(band.grid, band.lower, band.upper, color="tab:blue", alpha=0.2, linewidth=0)
    if math.isfinite(logit_star):
        ax.plot([lo, logit_star, logit_star], [target, target, 0], color="tab:orange")
    ax.set_xlabel("logit score")
    ax.set_ylabel("P(correct)")
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
