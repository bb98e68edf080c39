"""Pipeline configuration: TOML sections per stage, overridable from flags."""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .augment import AugmentConfig
from .detect import DetectorParams
from .errors import ValidationError
from .spectrogram import SpectrogramParams

OUTPUT_ROOT_ENV = "SONGSIEVE_OUTPUT_ROOT"


@dataclass(frozen=True)
class Paths:
    audio_root: str = ""
    annotation_root: str = ""
    output_root: str = "songsieve-out"
    background_meta: str = ""
    background_audio: str = ""


@dataclass(frozen=True)
class SchemeConfig:
    mode: str = "binary"
    extra_dropped: tuple[str, ...] = ()


@dataclass(frozen=True)
class SplitConfig:
    targets: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 42


@dataclass(frozen=True)
class EvaluationConfig:
    iou_min: float = 0.1
    window_s: float = 3.0
    window_mode: str = "window"
    window_iou_min: float = 0.0
    clip_duration_s: float = 60.0
    image_width_px: int = 930
    confidence_threshold: float = 0.15
    window_confidence_threshold: float = 0.1
    classifier_min_confidence: float = 0.1


@dataclass(frozen=True)
class CalibrationConfig:
    targets: tuple[float, ...] = (0.40, 0.60, 0.80, 0.95)
    iou_min: float = 0.1
    n_boot: int = 1000
    level: float = 0.90
    seed: int = 42
    rounding: str = "none"
    plot: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    spectrogram: SpectrogramParams = field(default_factory=SpectrogramParams)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    detector: DetectorParams = field(default_factory=DetectorParams)
    detector_source: str = "baseline"
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    workers: int = 0

    def as_dict(self) -> dict:
        return _plain(asdict(self))

    def output_root(self) -> Path:
        return Path(self.paths.output_root)


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _coerce(section_cls, values: dict, where: str):
    known = {f.name: f for f in fields(section_cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ValidationError(f"unknown keys in [{where}]: {sorted(unknown)}")
    kwargs = {}
    defaults = section_cls()
    for k, v in values.items():
        current = getattr(defaults, k)
        if isinstance(current, tuple):
            v = tuple(v)
        elif isinstance(current, bool):
            if not isinstance(v, bool):
                raise ValidationError(f"[{where}] {k} must be a boolean")
        elif isinstance(current, float) and isinstance(v, int):
            v = float(v)
        kwargs[k] = v
    try:
        return replace(defaults, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"[{where}] {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    sections = {f.name: f for f in fields(PipelineConfig)}
    updates = {}
    for key, value in data.items():
        if key not in sections:
            raise ValidationError(f"unknown config section {key!r}")
        current = getattr(cfg, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ValidationError(f"[{key}] must be a table")
            updates[key] = _coerce(type(current), value, key)
        else:
            updates[key] = value
    cfg = replace(cfg, **updates)
    validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    cfg = config_from_dict(data)
    env_root = os.environ.get(OUTPUT_ROOT_ENV)
    if env_root:
        cfg = replace(cfg, paths=replace(cfg.paths, output_root=env_root))
    return cfg


def override(cfg: PipelineConfig, section: str, **values) -> PipelineConfig:
    """Apply non-None flag values to one section."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    if section == "":
        return replace(cfg, **values)
    current = getattr(cfg, section)
    try:
        new = replace(current, **values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{section}: {exc}") from exc
    cfg = replace(cfg, **{section: new})
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    ev = cfg.evaluation
    if not 0 <= ev.iou_min <= 1 or not 0 <= ev.window_iou_min <= 1:
        raise ValidationError("iou thresholds must lie in [0, 1]")
    if ev.window_s <= 0 or ev.clip_duration_s <= 0 or ev.image_width_px <= 0:
        raise ValidationError("window_s, clip_duration_s and image_width_px must be positive")
    if ev.window_mode not in ("window", "annotation"):
        raise ValidationError(f"window_mode must be 'window' or 'annotation', got {ev.window_mode!r}")
    for name in ("confidence_threshold", "window_confidence_threshold", "classifier_min_confidence"):
        if not 0 <= getattr(ev, name) <= 1:
            raise ValidationError(f"{name} must lie in [0, 1]")
    cal = cfg.calibration
    if any(not 0 < t < 1 for t in cal.targets):
        raise ValidationError("calibration targets must lie in (0, 1)")
    if cal.n_boot < 0 or not 0 < cal.level < 1:
        raise ValidationError("n_boot must be >= 0 and level in (0, 1)")
    if cal.rounding not in ("none", "half-up", "ceil"):
        raise ValidationError(f"rounding must be none, half-up or ceil, got {cal.rounding!r}")
    if cfg.scheme.mode not in ("binary", "classifier"):
        raise ValidationError(f"scheme mode must be binary or classifier, got {cfg.scheme.mode!r}")
    t = cfg.split.targets
    if len(t) != 3 or abs(sum(t) - 1) > 1e-9 or min(t) < 0:
        raise ValidationError("split targets must be three fractions summing to 1")
    src = cfg.detector_source
    if src != "baseline" and not src.startswith("ingest:"):
        raise ValidationError("detector_source must be 'baseline' or 'ingest:<path>'")
    if cfg.workers < 0:
        raise ValidationError("workers must be >= 0 (0 = all cores)")


def require_path(value: str | Path, what: str, kind: str = "any") -> Path:
    """Existing path or a ValidationError naming the missing input."""
    if not value:
        raise ValidationError(f"{what} is required")
    p = Path(value)
    if not p.exists():
        raise ValidationError(f"{what} does not exist: {p}")
    if kind == "dir" and not p.is_dir():
        raise ValidationError(f"{what} is not a directory: {p}")
    if kind == "file" and not p.is_file():
        raise ValidationError(f"{what} is not a file: {p}")
    return p
