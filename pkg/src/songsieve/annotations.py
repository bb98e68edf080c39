"""Ground-truth annotations and their conversion to YOLO boxes."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    CoordinateOutOfRange,
    DanglingFrequencyRow,
    MalformedRow,
    OutOfRange,
    UnknownLabel,
)

CLIP_DURATION_S = 60.0
BIRD = "Bird"
NO_BIRD = "No Bird"
# general classes that overlap specific species, plus the single-file species
CLASSIFIER_DROPPED = frozenset({"Alaudidae", BIRD, "Fringillidae", "Upupa epops", NO_BIRD})
CSV_FIELDS = ("source_id", "start_s", "end_s", "fmin_hz", "fmax_hz", "label")


@dataclass(frozen=True)
class Annotation:
    start_s: float
    end_s: float
    label: str
    fmin_hz: float | None = None
    fmax_hz: float | None = None
    source_id: str = ""

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(f"invalid annotation span [{self.start_s}, {self.end_s}]")
        if (self.fmin_hz is None) != (self.fmax_hz is None):
            raise ValueError("fmin_hz and fmax_hz must be given together")
        if self.fmin_hz is not None and not self.fmin_hz < self.fmax_hz:
            raise ValueError(f"invalid frequency span [{self.fmin_hz}, {self.fmax_hz}]")

    @property
    def span(self) -> tuple[float, float]:
        return (self.start_s, self.end_s)


def _is_no_bird(label: str) -> bool:
    return label.strip().casefold() == NO_BIRD.casefold()


@dataclass(frozen=True)
class LabelScheme:
    """Mapping from raw expert labels to the labels a model is trained on.

    ``binary`` folds every label except "No Bird" into "Bird". ``classifier``
    keeps species labels as-is and removes the general/overlapping classes.
    """

    mode: str
    keep: frozenset[str]
    remap: Mapping[str, str] = field(default_factory=dict)
    dropped: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.mode not in ("binary", "classifier"):
            raise ValueError(f"unknown scheme mode {self.mode!r}")
        object.__setattr__(self, "keep", frozenset(self.keep))
        object.__setattr__(self, "dropped", frozenset(self.dropped))
        remap = dict(self.remap)
        for k in self.keep:
            remap.setdefault(k, k)
        if not set(remap.values()) <= self.keep:
            raise ValueError("remap targets must be a subset of keep")
        if self.mode == "classifier" and not CLASSIFIER_DROPPED - {NO_BIRD} <= self.dropped:
            raise ValueError("classifier scheme must drop Alaudidae, Bird, Fringillidae and Upupa epops")
        object.__setattr__(self, "remap", remap)

    @classmethod
    def binary(cls) -> "LabelScheme":
        return cls("binary", frozenset({BIRD}), {}, frozenset({NO_BIRD}))

    @classmethod
    def classifier(cls, labels: Iterable[str], extra_dropped: Iterable[str] = ()) -> "LabelScheme":
        """Scheme keeping every observed label that is not dropped."""
        dropped = CLASSIFIER_DROPPED | frozenset(extra_dropped)
        keep = frozenset(lab for lab in labels if lab not in dropped and not _is_no_bird(lab))
        return cls("classifier", keep, {}, dropped)

    @property
    def classes(self) -> list[str]:
        """Class names in index order (lexicographic)."""
        return sorted(self.keep)

    def class_index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise UnknownLabel(f"label {label!r} is not a class of this scheme") from None

    def map_label(self, label: str) -> str | None:
        """Scheme label for ``label``, or None if it is excluded."""
        if self.mode == "binary":
            return None if _is_no_bird(label) or label in self.dropped else BIRD
        if label in self.dropped or _is_no_bird(label):
            return None
        try:
            return self.remap[label]
        except KeyError:
            raise UnknownLabel(f"label {label!r} is neither mapped nor dropped") from None


def apply_scheme(annotations: Iterable[Annotation], scheme: LabelScheme) -> list[Annotation]:
    out = []
    for a in annotations:
        mapped = scheme.map_label(a.label)
        if mapped is not None:
            out.append(a if mapped == a.label else replace(a, label=mapped))
    return out


def _parse_float(text: str, what: str, source: str | None, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"non-numeric {what}: {text!r}", source=source, line=line) from None
    if not math.isfinite(value):
        raise MalformedRow(f"non-finite {what}: {text!r}", source=source, line=line)
    return value


def parse_audacity_labels(text: str, source_id: str = "", source: str | None = None) -> list[Annotation]:
    """Parse an Audacity label-track export.

    Rows are ``start<TAB>end<TAB>label``; spectral selections add a following
    ``\\<TAB>fmin<TAB>fmax`` row that belongs to the label above it.
    """
    result: list[Annotation] = []
    has_freq = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        row = raw.rstrip("\r")
        if not row.strip():
            continue
        cols = row.split("\t")
        if cols[0] == "\\":
            if not result or has_freq:
                raise DanglingFrequencyRow("frequency row without a preceding label row", source=source, line=lineno)
            if len(cols) != 3:
                raise MalformedRow(f"expected 3 columns in frequency row, got {len(cols)}", source=source, line=lineno)
            fmin = _parse_float(cols[1], "fmin", source, lineno)
            fmax = _parse_float(cols[2], "fmax", source, lineno)
            if not fmin < fmax:
                raise MalformedRow(f"fmin {fmin} >= fmax {fmax}", source=source, line=lineno)
            result[-1] = replace(result[-1], fmin_hz=fmin, fmax_hz=fmax)
            has_freq = True
            continue
        if len(cols) != 3:
            raise MalformedRow(f"expected 3 columns, got {len(cols)}", source=source, line=lineno)
        start = _parse_float(cols[0], "start", source, lineno)
        end = _parse_float(cols[1], "end", source, lineno)
        if not 0.0 <= start < end:
            raise MalformedRow(f"invalid span [{start}, {end}]", source=source, line=lineno)
        result.append(Annotation(start, end, cols[2].strip(), source_id=source_id))
        has_freq = False
    return result


def read_audacity_file(path: str | Path) -> list[Annotation]:
    path = Path(path)
    return parse_audacity_labels(path.read_text(encoding="utf-8"), source_id=path.stem, source=str(path))


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_annotations_csv(annotations: Iterable[Annotation], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for a in annotations:
            w.writerow([a.source_id, _fmt(a.start_s), _fmt(a.end_s), _fmt(a.fmin_hz), _fmt(a.fmax_hz), a.label])
    return path


def parse_annotations_csv(text: str, source: str | None = None) -> list[Annotation]:
    reader = csv.DictReader(io.StringIO(text))
    missing = {"source_id", "start_s", "end_s", "label"} - set(reader.fieldnames or ())
    if missing:
        raise MalformedRow(f"missing CSV columns: {sorted(missing)}", source=source, line=1)
    out = []
    for row in reader:
        line = reader.line_num
        start = _parse_float(row["start_s"], "start_s", source, line)
        end = _parse_float(row["end_s"], "end_s", source, line)
        if not 0.0 <= start < end:
            raise MalformedRow(f"invalid span [{start}, {end}]", source=source, line=line)
        fmin_txt, fmax_txt = (row.get("fmin_hz") or "").strip(), (row.get("fmax_hz") or "").strip()
        fmin = _parse_float(fmin_txt, "fmin_hz", source, line) if fmin_txt else None
        fmax = _parse_float(fmax_txt, "fmax_hz", source, line) if fmax_txt else None
        if (fmin is None) != (fmax is None) or (fmin is not None and not fmin < fmax):
            raise MalformedRow("invalid frequency span", source=source, line=line)
        out.append(Annotation(start, end, row["label"], fmin, fmax, row["source_id"]))
    return out


def read_annotations_csv(path: str | Path) -> list[Annotation]:
    path = Path(path)
    return parse_annotations_csv(path.read_text(encoding="utf-8"), source=str(path))


@dataclass(frozen=True)
class YoloBox:
    class_idx: int
    x_center: float
    y_center: float = 0.5
    x_width: float = 1.0
    y_height: float = 1.0

    def validate(self, tol: float = 1e-9) -> None:
        if self.class_idx < 0:
            raise CoordinateOutOfRange(f"negative class index {self.class_idx}")
        for name in ("x_center", "y_center", "x_width", "y_height"):
            v = getattr(self, name)
            if not (-tol <= v <= 1 + tol):
                raise CoordinateOutOfRange(f"{name}={v} outside [0, 1]")
        lo = self.x_center - self.x_width / 2
        hi = self.x_center + self.x_width / 2
        if lo < -1e-6 or hi > 1 + 1e-6:
            raise CoordinateOutOfRange(f"box spans [{lo}, {hi}] outside [0, 1]")


def to_yolo(a: Annotation, file_duration_s: float = CLIP_DURATION_S, scheme: LabelScheme | None = None) -> YoloBox:
    """Full-height box for one annotation; time maps linearly onto x."""
    if a.start_s < 0 or a.end_s > file_duration_s + 1e-9:
        raise OutOfRange(f"annotation [{a.start_s}, {a.end_s}] outside [0, {file_duration_s}]", source=a.source_id or None)
    class_idx = scheme.class_index(a.label) if scheme is not None else 0
    return YoloBox(
        class_idx=class_idx,
        x_center=(a.start_s + a.end_s) / (2 * file_duration_s),
        y_center=0.5,
        x_width=(a.end_s - a.start_s) / file_duration_s,
        y_height=1.0,
    )


def format_yolo_row(box: YoloBox) -> str:
    return f"{box.class_idx} {box.x_center:.6f} {box.y_center:.6f} {box.x_width:.6f} {box.y_height:.6f}"


def write_yolo_file(boxes: Sequence[YoloBox], path: str | Path) -> Path:
    """Write one box per line; an empty list still creates a zero-byte file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    for b in boxes:
        b.validate()
    path.write_text("".join(format_yolo_row(b) + "\n" for b in boxes))
    return path


def parse_yolo_rows(text: str, n_cols: int = 5, source: str | None = None) -> list[list[float]]:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        cols = raw.split()
        if len(cols) != n_cols:
            raise MalformedRow(f"expected {n_cols} columns, got {len(cols)}", source=source, line=lineno)
        try:
            cls = int(cols[0])
        except ValueError:
            raise MalformedRow(f"class index {cols[0]!r} is not an integer", source=source, line=lineno) from None
        rows.append([cls] + [_parse_float(c, "coordinate", source, lineno) for c in cols[1:]])
    return rows


def read_yolo_file(path: str | Path) -> list[YoloBox]:
    path = Path(path)
    boxes = []
    for lineno, row in enumerate(parse_yolo_rows(path.read_text(), 5, str(path)), start=1):
        box = YoloBox(int(row[0]), *row[1:5])
        try:
            box.validate(tol=5e-7)
        except CoordinateOutOfRange as exc:
            raise CoordinateOutOfRange(str(exc), source=str(path), line=lineno) from None
        boxes.append(box)
    return boxes


def yolo_label_path(audio_path: str | Path, audio_root: str | Path, labels_root: str | Path) -> Path:
    """Label file for ``audio_path``, mirroring its place under ``audio_root``."""
    rel = Path(audio_path).relative_to(audio_root)
    return Path(labels_root) / rel.with_suffix(".txt")


def write_classes(classes: Sequence[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(c + "\n" for c in classes), encoding="utf-8")
    return path


def read_classes(path: str | Path) -> list[str]:
    return [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line]


def group_by_source(annotations: Iterable[Annotation]) -> dict[str, list[Annotation]]:
    groups: dict[str, list[Annotation]] = {}
    for a in annotations:
        groups.setdefault(a.source_id, []).append(a)
    return groups
