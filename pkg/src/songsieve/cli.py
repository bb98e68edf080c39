"""``songsieve`` command line.

Flags override the optional TOML config (``--config``). Artifacts go under
the output root next to a ``manifest-<command>.json`` holding the effective
config and artifact checksums. Exit status is 0 on success, 1 for invalid
configuration or arguments, 2 for bad input data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .annotations import (
    LabelScheme,
    apply_scheme,
    group_by_source,
    read_annotations_csv,
    read_audacity_file,
    read_classes,
    to_yolo,
    write_annotations_csv,
    write_classes,
    write_yolo_file,
)
from .audio_io import load_wav, write_wav
from .augment import (
    AugmentConfig,
    augment_clip,
    background_count,
    load_background_clip,
    mix_background_set,
    read_background_metadata,
)
from .calibrate import (
    bootstrap_band,
    fit_logistic,
    samples_from_detections,
    threshold_for_probability,
    tp_loss_table,
)
from .config import PipelineConfig, load_config, override, require_path
from .detect import DetectorParams, energy_detector, filter_by_confidence, ingest_detections, write_detections_csv
from .errors import DataError, SongsieveError, ValidationError
from .evaluate import (
    BACKGROUND,
    align_classifier_predictions,
    average_precision_50,
    classification_report,
    confusion_matrix,
    detection_metrics,
    fixed_window_eval,
    idx_pred_ann,
    match_detections,
)
from .reports import (
    calibration_json,
    comparison_rows,
    write_band_csv,
    write_calibration_csv,
    write_calibration_svg,
    write_classification_csv,
    write_comparison_csv,
    write_confusion_csv,
    write_json,
    write_metrics_csv,
)
from .spectrogram import SpectrogramParams, clip_to_image, save_image
from .split import plan_split, write_class_counts_csv, write_split_csv

log = logging.getLogger("songsieve")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class Run:
    """Output root plus the list of artifacts written during one command."""

    def __init__(self, command: str, cfg: PipelineConfig, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.artifacts: list[Path] = []
        self.notes: list[str] = []

    def path(self, *parts: str) -> Path:
        return self.out.joinpath(*parts)

    def add(self, *paths: Path) -> None:
        self.artifacts.extend(Path(p) for p in paths)

    def finish(self, seed: int | None = None) -> Path:
        checksums = {}
        for p in sorted(set(self.artifacts)):
            checksums[p.relative_to(self.out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": seed,
            "config": self.cfg.as_dict(),
            "artifacts": checksums,
            "notes": self.notes,
        }
        return write_json(manifest, self.out / f"manifest-{self.command}.json")


def _workers(cfg: PipelineConfig) -> int:
    return cfg.workers or os.cpu_count() or 1


def _map(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _wavs(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*") if p.suffix.lower() == ".wav" and p.is_file())


# --- spectrogram -----------------------------------------------------------

def _spectrogram_job(job: tuple[str, str, SpectrogramParams]) -> tuple[str, str]:
    wav, png, params = job
    png_path, sidecar = save_image(clip_to_image(load_wav(wav), params), png)
    return str(png_path), str(sidecar)


def cmd_spectrogram(args, cfg: PipelineConfig, run: Run) -> None:
    root = require_path(args.audio_root or cfg.paths.audio_root, "audio root", "dir")
    jobs = [(str(w), str(run.path("spectrograms", w.relative_to(root).with_suffix(".png"))), cfg.spectrogram)
            for w in _wavs(root)]
    for png, sidecar in _map(_spectrogram_job, jobs, _workers(cfg)):
        run.add(Path(png), Path(sidecar))
    log.info("wrote %d spectrograms", len(jobs))


# --- convert ---------------------------------------------------------------

def _read_gt(path: str | Path) -> list:
    path = Path(path)
    if path.is_dir():
        out = []
        for txt in sorted(path.rglob("*.txt")):
            out.extend(read_audacity_file(txt))
        return out
    if path.suffix.lower() == ".csv":
        return read_annotations_csv(path)
    return read_audacity_file(path)


def _scheme(cfg: PipelineConfig, annotations) -> LabelScheme:
    if cfg.scheme.mode == "binary":
        return LabelScheme.binary()
    return LabelScheme.classifier({a.label for a in annotations}, cfg.scheme.extra_dropped)


def cmd_convert(args, cfg: PipelineConfig, run: Run) -> None:
    src = require_path(args.annotations or cfg.paths.annotation_root, "annotations")
    raw = _read_gt(src)
    run.add(write_annotations_csv(raw, run.path("annotations.csv")))
    scheme = _scheme(cfg, raw)
    run.add(write_classes(scheme.classes, run.path("classes.txt")))
    kept = group_by_source(apply_scheme(raw, scheme))
    duration = cfg.evaluation.clip_duration_s

    label_paths: dict[str, Path] = {}
    audio_root = args.audio_root or cfg.paths.audio_root
    if audio_root:
        root = require_path(audio_root, "audio root", "dir")
        for w in _wavs(root):
            label_paths[w.stem] = run.path("labels", w.relative_to(root).with_suffix(".txt"))
    for sid in {a.source_id for a in raw}:
        label_paths.setdefault(sid, run.path("labels", f"{sid}.txt"))
    for sid in sorted(label_paths):
        boxes = [to_yolo(a, duration, scheme) for a in kept.get(sid, [])]
        run.add(write_yolo_file(boxes, label_paths[sid]))
    log.info("converted %d annotations into %d label files", len(raw), len(label_paths))


# --- split -----------------------------------------------------------------

def cmd_split(args, cfg: PipelineConfig, run: Run) -> int:
    cfg = override(cfg, "split", targets=args.targets, seed=args.seed)
    run.cfg = cfg
    src = require_path(args.annotations or cfg.paths.annotation_root, "annotations")
    anns = _read_gt(src)
    if cfg.scheme.mode == "classifier":
        anns = apply_scheme(anns, _scheme(cfg, anns))
    plan = plan_split(anns, cfg.split.targets, cfg.split.seed)
    run.add(write_split_csv(plan, run.path("split.csv")), write_class_counts_csv(plan, run.path("class_counts.csv")))
    for w in plan.warnings:
        log.warning(w)
    run.notes.extend(plan.warnings)
    return cfg.split.seed


# --- augment ---------------------------------------------------------------

def _augment_job(job: tuple[str, str, AugmentConfig, int]) -> tuple[str, float, float]:
    wav, out, acfg, index = job
    clip, snr, gain = augment_clip(load_wav(wav), acfg, index)
    write_wav(clip, out)
    return out, snr, gain


def _background_job(job: tuple[str, str, AugmentConfig]) -> str:
    src, out, acfg = job
    from .augment import BackgroundItem

    write_wav(load_background_clip(BackgroundItem(Path(src), ""), acfg), out)
    return out


def cmd_augment(args, cfg: PipelineConfig, run: Run) -> int:
    cfg = override(cfg, "augment", background_fraction=args.background_fraction, seed=args.seed)
    run.cfg = cfg
    acfg = cfg.augment
    root = require_path(args.audio_root or cfg.paths.audio_root, "audio root", "dir")
    labels_root = Path(args.labels_root) if args.labels_root else None
    wavs = _wavs(root)
    if args.split:
        from .split import read_split_csv

        subsets = read_split_csv(require_path(args.split, "split file", "file"))
        wavs = [w for w in wavs if subsets.get(w.stem) == "train"]

    jobs = []
    for i, w in enumerate(wavs):
        rel = w.relative_to(root)
        out = run.path("augment", "audio", rel.with_name(f"{rel.stem}_aug.wav"))
        jobs.append((str(w), str(out), acfg, i))
        label_src = labels_root / rel.with_suffix(".txt") if labels_root else None
        label_out = run.path("augment", "labels", rel.with_name(f"{rel.stem}_aug.txt"))
        label_out.parent.mkdir(parents=True, exist_ok=True)
        if label_src is not None and label_src.exists():
            shutil.copyfile(label_src, label_out)
        else:
            label_out.write_text("")
        run.add(label_out)
    params = []
    for out, snr, gain in _map(_augment_job, jobs, _workers(cfg)):
        run.add(Path(out))
        params.append({"output": Path(out).relative_to(run.out).as_posix(), "snr_db": snr, "gain_db": gain})

    n_train = 2 * len(wavs)
    meta = args.background_meta or cfg.paths.background_meta
    selected = []
    if meta and acfg.background_fraction > 0 and n_train > 0:
        meta = require_path(meta, "background metadata", "file")
        audio_dir = args.background_audio or cfg.paths.background_audio or None
        items = read_background_metadata(meta, audio_dir)
        selected = mix_background_set(n_train, items, acfg)
        bg_jobs = []
        for it in selected:
            out = run.path("augment", "audio", "background", f"{it.path.stem}.wav")
            bg_jobs.append((str(it.path), str(out), acfg))
            label = run.path("augment", "labels", "background", f"{it.path.stem}.txt")
            label.parent.mkdir(parents=True, exist_ok=True)
            label.write_text("")
            run.add(label)
        for out in _map(_background_job, bg_jobs, _workers(cfg)):
            run.add(Path(out))
    elif acfg.background_fraction > 0 and n_train > 0:
        run.notes.append(f"no background set given; {background_count(n_train, acfg.background_fraction)} items would be needed")
    summary = {
        "n_train_items": n_train,
        "n_background": len(selected),
        "background_fraction_achieved": len(selected) / (n_train + len(selected)) if n_train else 0.0,
        "background_items": [{"path": str(it.path), "label": it.label} for it in selected],
        "augmented": params,
    }
    run.add(write_json(summary, run.path("augment", "augment_summary.json")))
    return acfg.seed


# --- detect ----------------------------------------------------------------

def _detect_job(job: tuple[str, DetectorParams]) -> list:
    wav, params = job
    return energy_detector(load_wav(wav), params)


def cmd_detect(args, cfg: PipelineConfig, run: Run) -> None:
    source = f"ingest:{args.ingest}" if args.ingest else cfg.detector_source
    ev = cfg.evaluation
    if source.startswith("ingest:"):
        path = require_path(source.split(":", 1)[1], "detections to ingest")
        classes = read_classes(args.classes) if args.classes else None
        dets = ingest_detections(path, ev.clip_duration_s, ev.image_width_px, classes)
    else:
        root = require_path(args.audio_root or cfg.paths.audio_root, "audio root", "dir")
        dets = []
        for chunk in _map(_detect_job, [(str(w), cfg.detector) for w in _wavs(root)], _workers(cfg)):
            dets.extend(chunk)
    if args.threshold is not None:
        dets = filter_by_confidence(dets, args.threshold)
    run.add(write_detections_csv(dets, run.path("detections.csv")))
    log.info("wrote %d detections", len(dets))


# --- evaluation ------------------------------------------------------------

def _load_eval_inputs(args, cfg: PipelineConfig):
    gt_path = require_path(args.gt, "ground truth")
    pred_path = require_path(args.pred, "predictions")
    gts = _read_gt(gt_path)
    ev = cfg.evaluation
    preds = ingest_detections(pred_path, ev.clip_duration_s, ev.image_width_px)
    return gts, preds


def cmd_eval_detections(args, cfg: PipelineConfig, run: Run) -> None:
    cfg = override(cfg, "evaluation", iou_min=args.iou_min, confidence_threshold=args.threshold)
    run.cfg = cfg
    ev = cfg.evaluation
    gts, preds = _load_eval_inputs(args, cfg)
    gts = apply_scheme(gts, LabelScheme.binary())
    kept = filter_by_confidence(preds, ev.confidence_threshold)
    metrics = detection_metrics(match_detections(kept, gts, ev.iou_min))
    summary = metrics.as_dict()
    summary.update(
        n_predictions=len(kept),
        n_annotations=len(gts),
        idx_pred_ann=idx_pred_ann(len(kept), len(gts)) if gts else None,
        map50=average_precision_50(preds, gts),
        iou_min=ev.iou_min,
        confidence_threshold=ev.confidence_threshold,
    )
    run.add(write_json(summary, run.path("metrics.json")))
    extra = {"map50": summary["map50"]}
    run.add(write_metrics_csv(metrics, run.path("metrics.csv"), extra))
    print(json.dumps({k: summary[k] for k in ("tp", "fp", "fn", "precision", "recall", "f1")}))


def _durations(args, cfg: PipelineConfig):
    if not args.durations:
        return cfg.evaluation.clip_duration_s
    import csv

    with open(require_path(args.durations, "durations file", "file"), newline="") as fh:
        return {row["source_id"]: float(row["duration_s"]) for row in csv.DictReader(fh)}


def cmd_eval_windows(args, cfg: PipelineConfig, run: Run) -> None:
    cfg = override(cfg, "evaluation", window_s=args.window_s, window_mode=args.mode,
                   window_confidence_threshold=args.threshold, window_iou_min=args.iou_min)
    run.cfg = cfg
    ev = cfg.evaluation
    gts, preds = _load_eval_inputs(args, cfg)
    gts = apply_scheme(gts, LabelScheme.binary())
    kept = filter_by_confidence(preds, ev.window_confidence_threshold)
    m = fixed_window_eval(kept, gts, _durations(args, cfg), ev.window_s, ev.window_mode, ev.window_iou_min)
    metrics = detection_metrics(m)
    summary = metrics.as_dict()
    summary.update(mode=ev.window_mode, window_s=ev.window_s, confidence_threshold=ev.window_confidence_threshold)
    run.add(write_json(summary, run.path("window_metrics.json")))
    run.add(write_metrics_csv(metrics, run.path("window_metrics.csv")))
    print(json.dumps({k: summary[k] for k in ("tp", "fp", "fn", "tn", "precision", "recall", "f1")}))


def cmd_eval_classifier(args, cfg: PipelineConfig, run: Run) -> None:
    cfg = override(cfg, "evaluation", classifier_min_confidence=args.min_confidence)
    run.cfg = cfg
    ev = cfg.evaluation
    gts, preds = _load_eval_inputs(args, cfg)
    scheme = replace(cfg.scheme, mode="classifier")
    gts = apply_scheme(gts, _scheme(replace(cfg, scheme=scheme), gts))
    class_order = read_classes(args.classes) if args.classes else sorted({a.label for a in gts})
    pred_labels, gt_labels = align_classifier_predictions(preds, gts, ev.classifier_min_confidence)
    n_pred = sum(1 for d in filter_by_confidence(preds, ev.classifier_min_confidence)
                 if d.label and d.label != BACKGROUND)
    report = classification_report(pred_labels, gt_labels, class_order, n_predictions=n_pred)
    run.add(write_json(report.as_dict(), run.path("classification_report.json")))
    run.add(write_classification_csv(report, run.path("classification_report.csv")))
    cm, labels = confusion_matrix(pred_labels, gt_labels, class_order, "none")
    run.add(write_confusion_csv(cm, labels, run.path("confusion_matrix.csv"), normalized=False))
    cmn, _ = confusion_matrix(pred_labels, gt_labels, class_order, "rows")
    run.add(write_confusion_csv(cmn, labels, run.path("confusion_matrix_normalized.csv"), normalized=True))
    print(json.dumps({"accuracy": report.accuracy, "idx_pred_ann": report.idx_pred_ann}))


def cmd_compare(args, cfg: PipelineConfig, run: Run) -> None:
    old = json.loads(require_path(args.a, "--a metrics", "file").read_text())
    new = json.loads(require_path(args.b, "--b metrics", "file").read_text())
    try:
        rows = comparison_rows(old, new)
    except KeyError as exc:
        raise DataError(f"metrics file lacks a count: {exc}") from None
    run.add(write_json({"old": str(args.a), "new": str(args.b), "rows": rows}, run.path("comparison.json")))
    run.add(write_comparison_csv(rows, run.path("comparison.csv")))
    for r in rows:
        pct = "-" if r["change_percent"] is None else f"{r['change_percent']:+d}%"
        print(f"{r['metric']}\t{r['old']}\t{r['new']}\t{pct}")


def cmd_calibrate(args, cfg: PipelineConfig, run: Run) -> int:
    cfg = override(cfg, "calibration", targets=args.targets, iou_min=args.iou_min, n_boot=args.n_boot,
                   seed=args.seed, rounding=args.rounding, plot=True if args.plot else None)
    run.cfg = cfg
    cal = cfg.calibration
    gts, preds = _load_eval_inputs(args, cfg)
    gts = apply_scheme(gts, LabelScheme.binary())
    samples = samples_from_detections(preds, gts, cal.iou_min)
    model = fit_logistic(samples)
    table = tp_loss_table(preds, gts, model, cal.targets, cal.iou_min, cal.rounding)
    run.add(write_json(model.as_dict(), run.path("model.json")))
    run.add(write_calibration_csv(table, run.path("calibration.csv")))
    run.add(write_json(calibration_json(model, table), run.path("calibration.json")))
    band = None
    if cal.n_boot > 0:
        band = bootstrap_band(samples, fit_logistic, cal.n_boot, cal.level, cal.seed)
        run.add(write_band_csv(band, model, run.path("band.csv")))
    if cal.plot:
        try:
            import matplotlib  # noqa: F401
        except ImportError:
            raise ValidationError("plotting needs matplotlib: pip install 'songsieve[plot]'") from None
        logits = np.array([s.logit for s in samples])
        outcomes = np.array([float(s.correct) for s in samples])
        target = 0.6 if 0.6 in cal.targets else cal.targets[0]
        logit_star, _ = threshold_for_probability(model, target)
        run.add(write_calibration_svg(run.path("calibration.svg"), logits, outcomes, model, band, target, logit_star))
    for r in table.rows:
        print(f"{r.probability_threshold:.0%}\t{r.logit_score:.2f}\t{r.confidence_score:.2f}\t{r.tp_loss_percent:.2f}")
    return cal.seed


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="songsieve", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", help="output root (overrides config and $SONGSIEVE_OUTPUT_ROOT)")
    common.add_argument("--workers", type=int, help="worker processes (1 = serial, 0 = all cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectrogram", parents=[common], help="render log-frequency spectrogram PNGs")
    s.add_argument("--audio-root")
    s.set_defaults(func=cmd_spectrogram)

    s = sub.add_parser("convert", parents=[common], help="annotations to interchange CSV and YOLO labels")
    s.add_argument("--annotations", help="Audacity label file/dir or interchange CSV")
    s.add_argument("--audio-root", help="create (empty) label files for every WAV here")
    s.add_argument("--scheme", choices=("binary", "classifier"))
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("split", parents=[common], help="file-exclusive train/validation/test split")
    s.add_argument("--annotations")
    s.add_argument("--targets", type=_floats)
    s.add_argument("--seed", type=int)
    s.add_argument("--scheme", choices=("binary", "classifier"))
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("augment", parents=[common], help="noise/gain variants and background negatives")
    s.add_argument("--audio-root")
    s.add_argument("--labels-root", help="YOLO labels mirroring --audio-root")
    s.add_argument("--split", help="split.csv; only train files are augmented")
    s.add_argument("--background-meta")
    s.add_argument("--background-audio")
    s.add_argument("--background-fraction", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("detect", parents=[common], help="run the baseline detector or ingest detections")
    s.add_argument("--audio-root")
    s.add_argument("--ingest", help="detections CSV, YOLO TXT or directory of TXTs")
    s.add_argument("--classes", help="classes.txt naming YOLO class indices")
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_detect)

    for name, func, helptext in (
        ("eval-detections", cmd_eval_detections, "IoU-matched detection metrics"),
        ("eval-windows", cmd_eval_windows, "fixed-window detection metrics"),
        ("eval-classifier", cmd_eval_classifier, "classification report and confusion matrix"),
        ("calibrate", cmd_calibrate, "logistic calibration and TP-loss table"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--gt", required=True, help="ground-truth CSV or Audacity labels")
        s.add_argument("--pred", required=True, help="detections CSV, YOLO TXT or directory")
        s.add_argument("--scheme", choices=("binary", "classifier"))
        s.set_defaults(func=func)
        if name == "eval-detections":
            s.add_argument("--iou-min", type=float)
            s.add_argument("--threshold", type=float, help="confidence threshold (default 0.15)")
        elif name == "eval-windows":
            s.add_argument("--window-s", type=float)
            s.add_argument("--mode", choices=("window", "annotation"))
            s.add_argument("--iou-min", type=float, help="window-vs-annotation IoU floor (window mode)")
            s.add_argument("--threshold", type=float, help="confidence threshold (default 0.1)")
            s.add_argument("--durations", help="CSV source_id,duration_s; default: clip duration for all")
        elif name == "eval-classifier":
            s.add_argument("--classes", help="classes.txt fixing the class order")
            s.add_argument("--min-confidence", type=float)
        else:
            s.add_argument("--targets", type=_floats)
            s.add_argument("--iou-min", type=float)
            s.add_argument("--n-boot", type=int)
            s.add_argument("--seed", type=int)
            s.add_argument("--rounding", choices=("none", "half-up", "ceil"))
            s.add_argument("--plot", action="store_true", help="also write calibration.svg")

    s = sub.add_parser("compare", parents=[common], help="percentage change between two metrics JSONs")
    s.add_argument("--a", required=True, help="baseline (old) metrics.json")
    s.add_argument("--b", required=True, help="new metrics.json")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg = replace(cfg, paths=replace(cfg.paths, output_root=args.out))
        cfg = override(cfg, "", workers=args.workers)
        if getattr(args, "scheme", None):
            cfg = override(cfg, "scheme", mode=args.scheme)
        out = cfg.output_root()
        out.mkdir(parents=True, exist_ok=True)
        run = Run(args.command, cfg, out)
        seed = args.func(args, cfg, run)
        run.finish(seed)
    except ValidationError as exc:
        print(f"songsieve: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (DataError, SongsieveError) as exc:
        print(f"songsieve: data error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"songsieve: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"songsieve: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
