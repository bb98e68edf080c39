"""Detections as time segments, from YOLO boxes or a baseline energy detector."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal, stats

from .annotations import CLIP_DURATION_S, YoloBox, _parse_float, parse_yolo_rows
from .audio_io import AudioClip
from .errors import ClipTooShort, ConfidenceOutOfRange, MalformedRow
from .spectrogram import IMAGE_WIDTH_PX

DETECTION_FIELDS = ("source_id", "start_s", "end_s", "confidence", "label")


@dataclass(frozen=True)
class Detection:
    start_s: float
    end_s: float
    confidence: float
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(f"invalid detection span [{self.start_s}, {self.end_s}]")
        if not (0.0 < self.confidence < 1.0):
            raise ConfidenceOutOfRange(f"confidence {self.confidence} outside (0, 1)", source=self.source_id or None)

    @property
    def span(self) -> tuple[float, float]:
        return (self.start_s, self.end_s)


def bbox_to_time(
    box: YoloBox, W: int = IMAGE_WIDTH_PX, clip_duration_s: float = CLIP_DURATION_S
) -> tuple[float, float]:
    """Start and end seconds of a normalized box.

    Denormalizes to pixels, then scales pixels to seconds, in that order.
    """
    x_center_d = box.x_center * W
    w_d = box.x_width * W
    start_sec = (x_center_d - w_d / 2) * (clip_duration_s / W)
    end_sec = (x_center_d + w_d / 2) * (clip_duration_s / W)
    return min(max(start_sec, 0.0), clip_duration_s), min(max(end_sec, 0.0), clip_duration_s)


def filter_by_confidence(detections: Iterable[Detection], threshold: float) -> list[Detection]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return [d for d in detections if d.confidence >= threshold]


@dataclass(frozen=True)
class DetectorParams:
    band_hz: tuple[float, float] = (600.0, 16000.0)
    frame_s: float = 0.05
    hop_s: float = 0.025
    k_mad: float = 3.0
    min_dur_s: float = 0.08
    merge_gap_s: float = 0.15

    def __post_init__(self):
        low, high = self.band_hz
        if not 0 <= low < high:
            raise ValueError(f"invalid band {self.band_hz}")
        if not self.frame_s >= self.hop_s > 0:
            raise ValueError("need frame_s >= hop_s > 0")


def _band_filter(x: np.ndarray, sr: int, band: tuple[float, float]) -> np.ndarray:
    nyq = sr / 2
    low, high = band
    has_low = low > 0
    has_high = high < 0.98 * nyq
    if has_low and has_high:
        sos = signal.butter(4, [low, high], btype="bandpass", fs=sr, output="sos")
    elif has_low:
        sos = signal.butter(4, low, btype="highpass", fs=sr, output="sos")
    elif has_high:
        sos = signal.butter(4, high, btype="lowpass", fs=sr, output="sos")
    else:
        return x
    return signal.sosfiltfilt(sos, x)


def rms_envelope(x: np.ndarray, frame_len: int, hop_len: int) -> np.ndarray:
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    starts = np.arange(0, len(x) - frame_len + 1, hop_len)
    energy = (csum[starts + frame_len] - csum[starts]) / frame_len
    return np.sqrt(np.maximum(energy, 0.0))


def _active_runs(active: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (first, last) index pairs of consecutive True runs."""
    edges = np.diff(np.concatenate(([0], active.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), stops.tolist()))


def energy_detector(clip: AudioClip, params: DetectorParams = DetectorParams()) -> list[Detection]:
    """Band-limited RMS-envelope detector with a robust median/MAD threshold.

    Frames above median + k*MAD form runs (MAD scaled to estimate a
    Gaussian standard deviation); runs closer than ``merge_gap_s``
    merge, runs shorter than ``min_dur_s`` are dropped. Confidence is
    z / (1 + z) = sigmoid(ln z), with z the run's peak excess over the
    threshold in MAD units, so it is strictly inside (0, 1) and increases
    with peak energy.
    """
    sr = clip.sample_rate_hz
    frame_len = max(1, int(round(params.frame_s * sr)))
    hop_len = max(1, int(round(params.hop_s * sr)))
    if len(clip) <= frame_len:
        raise ClipTooShort(f"clip shorter than one {params.frame_s} s frame", source=clip.source_id or None)

    x = _band_filter(clip.samples, sr, params.band_hz)
    env = rms_envelope(x, frame_len, hop_len)
    med = float(np.median(env))
    mad = float(stats.median_abs_deviation(env, scale="normal"))
    threshold = med + params.k_mad * mad
    scale = max(mad, 1e-6 * med, 1e-12)

    centers = (np.arange(len(env)) * hop_len + frame_len / 2) / sr
    half_hop = hop_len / sr / 2
    segments: list[list[float]] = []  # [start, end, peak]
    for first, last in _active_runs(env > threshold):
        start = max(0.0, centers[first] - half_hop)
        end = min(clip.duration_s, centers[last] + half_hop)
        peak = float(env[first : last + 1].max())
        if segments and start - segments[-1][1] < params.merge_gap_s:
            segments[-1][1] = end
            segments[-1][2] = max(segments[-1][2], peak)
        else:
            segments.append([start, end, peak])

    out = []
    for start, end, peak in segments:
        if end - start < params.min_dur_s:
            continue
        z = (peak - threshold) / scale
        out.append(Detection(float(start), float(end), z / (1.0 + z), None, clip.source_id))
    return out


def parse_detections_csv(text: str, source: str | None = None) -> list[Detection]:
    reader = csv.DictReader(io.StringIO(text))
    missing = {"source_id", "start_s", "end_s", "confidence"} - set(reader.fieldnames or ())
    if missing:
        raise MalformedRow(f"missing CSV columns: {sorted(missing)}", source=source, line=1)
    out = []
    for row in reader:
        line = reader.line_num
        start = _parse_float(row["start_s"], "start_s", source, line)
        end = _parse_float(row["end_s"], "end_s", source, line)
        conf = _parse_float(row["confidence"], "confidence", source, line)
        if not 0.0 <= start < end:
            raise MalformedRow(f"invalid span [{start}, {end}]", source=source, line=line)
        if not 0.0 < conf < 1.0:
            raise ConfidenceOutOfRange(f"confidence {conf} outside (0, 1)", source=source, line=line)
        label = (row.get("label") or "").strip() or None
        out.append(Detection(start, end, conf, label, row["source_id"]))
    return out


def parse_yolo_detections(
    text: str,
    source_id: str,
    duration_s: float = CLIP_DURATION_S,
    W: int = IMAGE_WIDTH_PX,
    classes: Sequence[str] | None = None,
    source: str | None = None,
) -> list[Detection]:
    """Rows ``class x_c y_c w h conf`` as written by a YOLO predictor."""
    out = []
    for lineno, row in enumerate(parse_yolo_rows(text, 6, source), start=1):
        cls, xc, yc, w, h, conf = row
        if not 0.0 < conf < 1.0:
            raise ConfidenceOutOfRange(f"confidence {conf} outside (0, 1)", source=source, line=lineno)
        start, end = bbox_to_time(YoloBox(int(cls), xc, yc, w, h), W, duration_s)
        if not start < end:
            raise MalformedRow(f"box maps to empty span [{start}, {end}]", source=source, line=lineno)
        label = classes[int(cls)] if classes is not None else None
        out.append(Detection(start, end, conf, label, source_id))
    return out


def ingest_detections(
    path: str | Path,
    duration_s: float = CLIP_DURATION_S,
    W: int = IMAGE_WIDTH_PX,
    classes: Sequence[str] | None = None,
) -> list[Detection]:
    """Load detections from a detections CSV or a YOLO-with-confidence TXT.

    A directory is read recursively as one TXT per spectrogram, the file stem
    being the source id.
    """
    path = Path(path)
    if path.is_dir():
        out = []
        for txt in sorted(path.rglob("*.txt")):
            out.extend(ingest_detections(txt, duration_s, W, classes))
        return out
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        return parse_detections_csv(text, source=str(path))
    return parse_yolo_detections(text, path.stem, duration_s, W, classes, source=str(path))


def write_detections_csv(detections: Iterable[Detection], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_FIELDS)
        for d in detections:
            w.writerow([d.source_id, repr(float(d.start_s)), repr(float(d.end_s)), repr(float(d.confidence)), d.label or ""])
    return path
