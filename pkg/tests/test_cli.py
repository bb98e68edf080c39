from __future__ import annotations

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from songsieve import __version__
from songsieve.annotations import Annotation, write_annotations_csv
from songsieve.audio_io import Burst, synth_clip, write_wav
from songsieve.cli import main
from songsieve.config import OUTPUT_ROOT_ENV
from songsieve.detect import Detection, write_detections_csv

from reference_values import COUNTS


@pytest.fixture(autouse=True)
def _no_env_root(monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)


@pytest.fixture()
def project(tmp_path):
    audio = tmp_path / "audio"
    gts = []
    for k in range(3):
        bursts = [Burst(1 + k, 2.5 + k, 2500 + 500 * k, 0.3), Burst(7, 8, 4000, 0.2)]
        write_wav(synth_clip(bursts, 0.005, duration_s=10, seed=k), audio / f"site{k % 2}" / f"rec{k}.wav")
        label = "Turdus merula" if k % 2 else "Cettia cetti"
        gts += [Annotation(b.start_s, b.end_s, label, source_id=f"rec{k}") for b in bursts]
    gts.append(Annotation(8.5, 9.0, "No Bird", source_id="rec0"))
    write_annotations_csv(gts, tmp_path / "gt.csv")

    rng = np.random.default_rng(0)
    dets = []
    for i in range(60):
        sid = f"c{i}"
        conf = float(rng.uniform(0.05, 0.95))
        good = rng.random() < conf
        dets.append(Detection(1.0, 2.0, conf, "Bird", sid))
        if good:
            gts.append(Annotation(1.0, 2.0, "Bird", source_id=sid))
    write_detections_csv(dets, tmp_path / "cal_det.csv")
    write_annotations_csv(gts, tmp_path / "cal_gt.csv")

    bg = tmp_path / "esc50"
    (bg / "audio").mkdir(parents=True)
    (bg / "meta").mkdir()
    rows = ["filename,fold,target,category"]
    for i, cat in enumerate(["rain", "chirping_birds", "wind", "hen", "engine"]):
        name = f"1-{i}.wav"
        x = (0.1 * rng.standard_normal(44100 * 2) * 32767).astype(np.int16)
        wavfile.write(bg / "audio" / name, 44100, x)
        rows.append(f"{name},1,{i},{cat}")
    (bg / "meta" / "esc50.csv").write_text("\n".join(rows) + "\n")

    cfg = tmp_path / "songsieve.toml"
    cfg.write_text(
        f'workers = 1\n[paths]\naudio_root = "{audio}"\nannotation_root = "{tmp_path / "gt.csv"}"\n'
        f'background_meta = "{bg / "meta" / "esc50.csv"}"\n'
        "[evaluation]\nclip_duration_s = 10.0\n[augment]\nclip_duration_s = 10.0\n"
        "[calibration]\nn_boot = 50\n"
    )
    return tmp_path


def run(*args) -> int:
    return main([str(a) for a in args])


def checksums(root: Path) -> dict[str, str]:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_version_and_help(capsys):
    with pytest.raises(SystemExit) as exc:
        run("--version")
    assert exc.value.code == 0 and __version__ in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        run("eval-detections", "--help")
    assert exc.value.code == 0


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as exc:
        run("split", "--bogus")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run()
    assert exc.value.code == 1


def test_full_pipeline(project, capsys):
    cfg = project / "songsieve.toml"
    out = project / "out"
    before = checksums(project)

    assert run("spectrogram", "--config", cfg, "--out", out) == 0
    pngs = sorted((out / "spectrograms").rglob("*.png"))
    assert [p.relative_to(out / "spectrograms").as_posix() for p in pngs] == [
        "site0/rec0.png", "site0/rec2.png", "site1/rec1.png"]
    meta = json.loads(pngs[0].with_suffix(".json").read_text())
    assert (meta["width_px"], meta["height_px"]) == (930, 462)

    assert run("convert", "--config", cfg, "--out", out) == 0
    labels = sorted((out / "labels").rglob("*.txt"))
    assert len(labels) == 3
    assert (out / "labels" / "site0" / "rec0.txt").read_text().splitlines()[0].startswith("0 0.175000 0.500000 0.150000 1.000000")
    assert (out / "classes.txt").read_text() == "Bird\n"

    assert run("split", "--config", cfg, "--out", out, "--scheme", "classifier") == 0
    assert (out / "split.csv").read_text().startswith("source_id,subset\n")

    assert run("augment", "--config", cfg, "--out", out, "--labels-root", out / "labels") == 0
    summary = json.loads((out / "augment" / "augment_summary.json").read_text())
    assert summary["n_train_items"] == 6 and summary["n_background"] == 2
    assert all(it["label"] not in ("chirping_birds", "hen") for it in summary["background_items"])
    bg_labels = list((out / "augment" / "labels" / "background").glob("*.txt"))
    assert len(bg_labels) == 2 and all(p.stat().st_size == 0 for p in bg_labels)

    assert run("detect", "--config", cfg, "--out", out) == 0
    assert run("eval-detections", "--config", cfg, "--out", out,
               "--gt", project / "gt.csv", "--pred", out / "detections.csv", "--iou-min", "0.1") == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["tp"] == 6 and metrics["fn"] == 0
    assert metrics["n_annotations"] == 6 and "map50" in metrics
    assert (out / "metrics.csv").exists()

    assert run("eval-windows", "--config", cfg, "--out", out,
               "--gt", project / "gt.csv", "--pred", out / "detections.csv", "--mode", "annotation") == 0
    windows = json.loads((out / "window_metrics.json").read_text())
    assert windows["tp"] == 6 and windows["tn"] is None

    assert run("eval-classifier", "--config", cfg, "--out", out,
               "--gt", project / "gt.csv", "--pred", out / "detections.csv") == 0
    report = json.loads((out / "classification_report.json").read_text())
    assert report["support"] == 6

    assert run("calibrate", "--config", cfg, "--out", out, "--gt", project / "cal_gt.csv",
               "--pred", project / "cal_det.csv", "--targets", "0.4,0.6,0.8,0.95", "--plot") == 0
    table = (out / "calibration.csv").read_text().splitlines()
    assert table[0] == "probability_threshold,logit_score,confidence_score,tp_loss_percent"
    assert [r.split(",")[0] for r in table[1:]] == ["0.40", "0.60", "0.80", "0.95"]
    for name in ("calibration.json", "model.json", "band.csv", "calibration.svg"):
        assert (out / name).exists()

    for name in ("spectrogram", "convert", "split", "augment", "detect", "eval-detections",
                 "eval-windows", "eval-classifier", "calibrate"):
        manifest = json.loads((out / f"manifest-{name}.json").read_text())
        assert manifest["command"] == name and manifest["artifacts"]
        for rel, digest in manifest["artifacts"].items():
            assert hashlib.sha256((out / rel).read_bytes()).hexdigest() == digest

    # inputs untouched
    after = {k: v for k, v in checksums(project).items() if not k.startswith("out/")}
    assert after == before


def _pipeline(project, out, workers):
    cfg = project / "songsieve.toml"
    for cmd in ("spectrogram", "detect", "augment"):
        assert run(cmd, "--config", cfg, "--out", out, "--workers", workers) == 0
    assert run("calibrate", "--config", cfg, "--out", out, "--workers", workers,
               "--gt", project / "cal_gt.csv", "--pred", project / "cal_det.csv") == 0
    return checksums(out)


def test_rerun_byte_identical_and_worker_independent(project):
    first = _pipeline(project, project / "a", "1")
    second = _pipeline(project, project / "a", "1")
    assert first == second
    parallel = _pipeline(project, project / "c", "3")
    # manifests embed the output root and worker count; all artifacts match
    strip = lambda d: {k: v for k, v in d.items() if not k.startswith("manifest-")}
    assert strip(first) == strip(parallel)


def test_compare_reference_counts(tmp_path, capsys):
    (tmp_path / "a.json").write_text(json.dumps(COUNTS["finetuned_06"]))
    (tmp_path / "b.json").write_text(json.dumps(COUNTS["detector"]))
    assert run("compare", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json", "--out", tmp_path / "o") == 0
    assert "TP\t98\t196\t+100%" in capsys.readouterr().out
    csv_text = (tmp_path / "o" / "comparison.csv").read_text()
    assert "FP,6,9,+50%" in csv_text and "FN,211,70,-67%" in csv_text


def test_exit_codes(project, capsys):
    out = project / "o"
    assert run("split", "--annotations", project / "missing.csv", "--out", out) == 1
    bad_cfg = project / "bad.toml"
    bad_cfg.write_text("[evaluation]\niou_min = 7\n")
    assert run("split", "--config", bad_cfg, "--out", out) == 1
    bad_gt = project / "bad.csv"
    bad_gt.write_text("source_id,start_s,end_s,fmin_hz,fmax_hz,label\nrec0,abc,2,,,Bird\n")
    assert run("split", "--annotations", bad_gt, "--out", out) == 2
    err = capsys.readouterr().err
    assert "bad.csv:2" in err
    bad_det = project / "bad_det.csv"
    bad_det.write_text("source_id,start_s,end_s,confidence,label\nrec0,1,2,1.7,\n")
    assert run("eval-detections", "--gt", project / "gt.csv", "--pred", bad_det, "--out", out) == 2
    (project / "a.json").write_text("{}")
    assert run("compare", "--a", project / "a.json", "--b", project / "a.json", "--out", out) == 2


def test_env_output_root(project, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(project / "envout"))
    assert run("split", "--annotations", project / "gt.csv") == 0
    assert (project / "envout" / "split.csv").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "songsieve", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
