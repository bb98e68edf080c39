"""Matching detections against ground truth and the metrics built on it."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np

from .annotations import BIRD, Annotation
from .detect import Detection
from .errors import DivisionByZero, DurationUnknown, NoAnnotations, UnknownClass

BACKGROUND = "Background"
EXTRA_LABELS = (BIRD, BACKGROUND)


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    overlap = min(a[1], b[1]) - max(a[0], b[0])
    if overlap <= 0:
        return 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - overlap
    return overlap / union


def _overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int | None = None
    pairs: list[tuple[Detection, Annotation, float]] = field(default_factory=list, repr=False)
    unmatched_detections: list[Detection] = field(default_factory=list, repr=False)
    unmatched_annotations: list[Annotation] = field(default_factory=list, repr=False)

    def counts(self) -> dict[str, int | None]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _by_source(items: Iterable) -> dict[str, list]:
    groups: dict[str, list] = {}
    for it in items:
        groups.setdefault(it.source_id, []).append(it)
    return groups


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[Annotation],
    iou_min: float = 0.1,
    match_labels: bool = False,
) -> MatchResult:
    """One-to-one greedy matching per file.

    Predictions are visited by descending confidence (input order on ties);
    each takes the still-unmatched annotation with the highest IoU, provided
    it reaches ``iou_min``. With ``match_labels`` the labels must agree too.
    """
    result = MatchResult()
    pred_groups = _by_source(preds)
    gt_groups = _by_source(gts)
    for sid in sorted(set(pred_groups) | set(gt_groups)):
        file_preds = sorted(pred_groups.get(sid, []), key=lambda d: -d.confidence)
        file_gts = gt_groups.get(sid, [])
        taken = [False] * len(file_gts)
        for d in file_preds:
            best, best_iou = -1, -1.0
            for j, g in enumerate(file_gts):
                if taken[j] or (match_labels and d.label != g.label):
                    continue
                iou = interval_iou(d.span, g.span)
                if iou >= iou_min and iou > best_iou:
                    best, best_iou = j, iou
            if best >= 0:
                taken[best] = True
                result.pairs.append((d, file_gts[best], best_iou))
            else:
                result.unmatched_detections.append(d)
        result.unmatched_annotations.extend(g for j, g in enumerate(file_gts) if not taken[j])
    result.tp = len(result.pairs)
    result.fp = len(result.unmatched_detections)
    result.fn = len(result.unmatched_annotations)
    return result


def _windows(duration_s: float, window_s: float) -> list[tuple[float, float]]:
    n = math.ceil(duration_s / window_s - 1e-9)
    return [(k * window_s, min((k + 1) * window_s, duration_s)) for k in range(n)]


def fixed_window_eval(
    preds: Sequence[Detection],
    gts: Sequence[Annotation],
    durations: Mapping[str, float] | float | None,
    window_s: float = 3.0,
    mode: str = "window",
    iou_min: float = 0.0,
) -> MatchResult:
    """Score detections on a fixed grid of ``window_s`` windows.

    ``window`` mode counts windows: a window is ground-truth positive when an
    annotation overlaps it (with IoU >= ``iou_min`` against the window when
    that is positive) and predicted positive when any detection overlaps it.
    ``annotation`` mode counts annotations: one is a TP when any predicted
    window overlaps it, else FN; predicted windows touching no annotation
    are FPs. TN is only reported in window mode.

    ``durations`` maps source ids to file lengths; a single float applies to
    every file seen in ``preds`` or ``gts``.
    """
    if mode not in ("window", "annotation"):
        raise ValueError(f"unknown mode {mode!r}")
    pred_groups = _by_source(preds)
    gt_groups = _by_source(gts)
    sources = set(pred_groups) | set(gt_groups)
    if isinstance(durations, Mapping):
        sources |= set(durations)
        lookup = dict(durations)
    elif durations is not None:
        lookup = {sid: float(durations) for sid in sources}
    else:
        lookup = {}
    missing = sources - set(lookup)
    if missing:
        raise DurationUnknown(f"no duration for {sorted(missing)}")

    result = MatchResult(tn=0 if mode == "window" else None)
    for sid in sorted(sources):
        windows = _windows(lookup[sid], window_s)
        file_preds = pred_groups.get(sid, [])
        file_gts = gt_groups.get(sid, [])
        pred_pos = [any(_overlap(w, d.span) > 0 for d in file_preds) for w in windows]
        if mode == "window":
            for w, pp in zip(windows, pred_pos):
                if iou_min > 0:
                    gt_pos = any(interval_iou(w, g.span) >= iou_min for g in file_gts)
                else:
                    gt_pos = any(_overlap(w, g.span) > 0 for g in file_gts)
                if gt_pos and pp:
                    result.tp += 1
                elif pp:
                    result.fp += 1
                elif gt_pos:
                    result.fn += 1
                else:
                    result.tn += 1
        else:
            pos_windows = [w for w, pp in zip(windows, pred_pos) if pp]
            for g in file_gts:
                hits = [w for w in pos_windows if _overlap(w, g.span) > 0]
                if hits:
                    best = max(hits, key=lambda w: interval_iou(w, g.span))
                    det = Detection(best[0], best[1], 0.5, None, sid)
                    result.pairs.append((det, g, interval_iou(best, g.span)))
                else:
                    result.unmatched_annotations.append(g)
            for w in pos_windows:
                if not any(_overlap(w, g.span) > 0 for g in file_gts):
                    result.unmatched_detections.append(Detection(w[0], w[1], 0.5, None, sid))
            result.tp = len(result.pairs)
            result.fp = len(result.unmatched_detections)
            result.fn = len(result.unmatched_annotations)
    return result


@dataclass(frozen=True)
class DetectionMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float | None
    tp: int
    fp: int
    fn: int
    tn: int | None
    undefined: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "accuracy": self.accuracy, "undefined": list(self.undefined),
        }


def detection_metrics(m: MatchResult) -> DetectionMetrics:
    undefined = []

    def ratio(num: float, den: float, name: str) -> float:
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio(m.tp, m.tp + m.fp, "precision")
    recall = ratio(m.tp, m.tp + m.fn, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    accuracy = None
    if m.tn is not None:
        accuracy = ratio(m.tp + m.tn, m.tp + m.fp + m.fn + m.tn, "accuracy")
    return DetectionMetrics(precision, recall, f1, accuracy, m.tp, m.fp, m.fn, m.tn, tuple(undefined))


def percentage_change(new_value: float, old_value: float) -> float:
    if old_value == 0:
        raise DivisionByZero("percentage change from a zero baseline")
    return (new_value - old_value) / old_value * 100.0


def round_half_up(x: float, ndigits: int = 0) -> float:
    """Round half away from zero (tables), unlike Python's bankers' rounding."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def idx_pred_ann(n_predictions: int, n_annotations: int) -> float:
    """Predictions per annotation; above 1 means over-prediction."""
    if n_annotations <= 0:
        raise NoAnnotations("Idx Pred/Ann needs at least one annotation")
    return n_predictions / n_annotations


@dataclass(frozen=True)
class ClassRow:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    rows: list[ClassRow]
    accuracy: float
    macro_avg: tuple[float, float, float]
    weighted_avg: tuple[float, float, float]
    n_items: int
    n_predictions: int
    idx_pred_ann: float

    def row(self, label: str) -> ClassRow:
        return next(r for r in self.rows if r.label == label)

    def as_dict(self) -> dict:
        return {
            "classes": [r.__dict__ for r in self.rows],
            "accuracy": self.accuracy,
            "macro_avg": dict(zip(("precision", "recall", "f1"), self.macro_avg)),
            "weighted_avg": dict(zip(("precision", "recall", "f1"), self.weighted_avg)),
            "support": self.n_items,
            "n_predictions": self.n_predictions,
            "idx_pred_ann": self.idx_pred_ann,
        }


def _aligned(pred_labels, gt_labels, class_order) -> tuple[list[str], list[str], list[str]]:
    """(y_true, y_pred, labels) over GT items; missing predictions are Background."""
    allowed = set(class_order) | set(EXTRA_LABELS)
    pred_map = dict(pred_labels)
    y_true, y_pred = [], []
    for item_id, label in gt_labels:
        if label not in allowed:
            raise UnknownClass(f"ground-truth label {label!r} not in class order")
        p = pred_map.get(item_id, BACKGROUND)
        if p not in allowed:
            raise UnknownClass(f"predicted label {p!r} not in class order")
        y_true.append(label)
        y_pred.append(p)
    present = set(y_true) | set(y_pred)
    labels = [c for c in class_order if c in present]
    labels += [c for c in EXTRA_LABELS if c in present and c not in labels]
    return y_true, y_pred, labels


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def classification_report(
    pred_labels: Sequence[tuple[str, str]],
    gt_labels: Sequence[tuple[str, str]],
    class_order: Sequence[str],
    n_predictions: int | None = None,
) -> ClassificationReport:
    """Per-class precision/recall/F1 over ground-truth items.

    Averages run over every label seen in the ground truth or predictions
    (including the catch-all Bird and Background labels). ``n_predictions``
    defaults to the number of non-Background predictions.
    """
    y_true, y_pred, labels = _aligned(pred_labels, gt_labels, class_order)
    n = len(y_true)
    support = Counter(y_true)
    predicted = Counter(y_pred)
    correct = Counter(t for t, p in zip(y_true, y_pred) if t == p)
    rows = []
    for lab in labels:
        p = correct[lab] / predicted[lab] if predicted[lab] else 0.0
        r = correct[lab] / support[lab] if support[lab] else 0.0
        rows.append(ClassRow(lab, p, r, _f1(p, r), support[lab]))
    if rows:
        macro = tuple(float(np.mean([getattr(r, k) for r in rows])) for k in ("precision", "recall", "f1"))
    else:
        macro = (0.0, 0.0, 0.0)
    if n:
        weighted = tuple(sum(getattr(r, k) * r.support for r in rows) / n for k in ("precision", "recall", "f1"))
    else:
        weighted = (0.0, 0.0, 0.0)
    accuracy = sum(correct.values()) / n if n else 0.0
    if n_predictions is None:
        n_predictions = sum(1 for p in y_pred if p != BACKGROUND)
    idx = idx_pred_ann(n_predictions, n) if n else 0.0
    return ClassificationReport(rows, accuracy, macro, weighted, n, n_predictions, idx)


def confusion_matrix(
    pred_labels: Sequence[tuple[str, str]],
    gt_labels: Sequence[tuple[str, str]],
    class_order: Sequence[str],
    normalize: str = "none",
) -> tuple[np.ndarray, list[str]]:
    """Rows are ground-truth labels, columns predicted labels.

    Every class in ``class_order`` gets a row and column; Bird/Background are
    appended when they occur. Row normalization leaves empty rows at zero.
    """
    if normalize not in ("none", "rows"):
        raise ValueError(f"unknown normalization {normalize!r}")
    y_true, y_pred, present = _aligned(pred_labels, gt_labels, class_order)
    labels = list(class_order) + [c for c in EXTRA_LABELS if c in present and c not in class_order]
    index = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)))
    for t, p in zip(y_true, y_pred):
        cm[index[t], index[p]] += 1
    if normalize == "rows":
        sums = cm.sum(axis=1, keepdims=True)
        cm = np.divide(cm, sums, out=np.zeros_like(cm), where=sums > 0)
    return cm, labels


def align_classifier_predictions(
    preds: Sequence[Detection],
    gts: Sequence[Annotation],
    min_confidence: float = 0.1,
) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """Pair each annotation with a predicted label.

    The prediction is the label of the highest-confidence detection at or
    above ``min_confidence`` overlapping the annotation; none gives
    Background. Item ids are ``source_id#index``.
    """
    pred_groups = _by_source(preds)
    pred_labels, gt_labels = [], []
    for k, g in enumerate(gts):
        item = f"{g.source_id}#{k}"
        cands = [
            d for d in pred_groups.get(g.source_id, [])
            if d.confidence >= min_confidence and d.label and _overlap(d.span, g.span) > 0
        ]
        label = max(cands, key=lambda d: d.confidence).label if cands else BACKGROUND
        pred_labels.append((item, label))
        gt_labels.append((item, g.label))
    return pred_labels, gt_labels


def precision_recall_points(
    preds: Sequence[Detection], gts: Sequence[Annotation], iou_min: float = 0.5
) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) for every distinct confidence, descending.

    Detections sharing a confidence enter together, so each point is the
    operating point of thresholding at that score.
    """
    n_gt = len(gts)
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    gt_groups = _by_source(gts)
    taken = {sid: [False] * len(g) for sid, g in gt_groups.items()}
    tp = fp = 0
    points = []
    for pos, i in enumerate(order):
        d = preds[i]
        file_gts = gt_groups.get(d.source_id, [])
        flags = taken.get(d.source_id, [])
        best, best_iou = -1, -1.0
        for j, g in enumerate(file_gts):
            if flags[j]:
                continue
            iou = interval_iou(d.span, g.span)
            if iou >= iou_min and iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            flags[best] = True
            tp += 1
        else:
            fp += 1
        last_of_tie = pos == len(order) - 1 or preds[order[pos + 1]].confidence != d.confidence
        if last_of_tie:
            points.append((d.confidence, tp / n_gt if n_gt else 0.0, tp / (tp + fp)))
    return points


def average_precision_50(
    preds: Sequence[Detection], gts: Sequence[Annotation], iou_min: float = 0.5
) -> float:
    """Single-class AP at IoU 0.5 with all-points interpolation (= mAP50)."""
    if not preds or not gts:
        return 0.0
    points = precision_recall_points(preds, gts, iou_min)
    recalls = np.array([0.0] + [r for _, r, _ in points])
    precisions = np.array([p for _, _, p in points])
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    return float(np.sum(np.diff(recalls) * envelope))
