from __future__ import annotations

import pytest

from songsieve.config import OUTPUT_ROOT_ENV, PipelineConfig, config_from_dict, load_config, override, require_path
from songsieve.errors import ValidationError


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.spectrogram.out_width_px == 930 and cfg.spectrogram.out_height_px == 462
    assert cfg.spectrogram.fmin_hz == 1.0 and cfg.spectrogram.fmax_hz == 16000.0
    assert cfg.evaluation.iou_min == 0.1 and cfg.evaluation.window_s == 3.0
    assert cfg.evaluation.confidence_threshold == 0.15
    assert cfg.split.targets == (0.8, 0.1, 0.1)


def test_load_toml(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    path = tmp_path / "c.toml"
    path.write_text(
        'workers = 2\n[paths]\noutput_root = "out"\n[evaluation]\niou_min = 0.5\n'
        '[split]\ntargets = [0.6, 0.2, 0.2]\n[spectrogram]\nhop = 256\n[augment]\nbackground_fraction = 0\n'
    )
    cfg = load_config(path)
    assert cfg.evaluation.iou_min == 0.5 and cfg.split.targets == (0.6, 0.2, 0.2)
    assert cfg.spectrogram.hop == 256 and cfg.augment.background_fraction == 0.0
    assert cfg.workers == 2 and str(cfg.output_root()) == "out"


def test_env_overrides_output_root(monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, "/tmp/elsewhere")
    assert str(load_config(None).output_root()) == "/tmp/elsewhere"


@pytest.mark.parametrize(
    "data",
    [
        {"nope": {}},
        {"evaluation": {"bogus": 1}},
        {"evaluation": {"iou_min": 2.0}},
        {"evaluation": {"window_mode": "sliding"}},
        {"split": {"targets": [0.5, 0.5, 0.5]}},
        {"calibration": {"rounding": "floor"}},
        {"spectrogram": {"n_fft": 128, "hop": 512}},
        {"detector_source": "magic"},
        {"calibration": {"plot": "yes"}},
    ],
)
def test_invalid(data):
    with pytest.raises(ValidationError):
        config_from_dict(data)


def test_bad_files(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[paths\n")
    with pytest.raises(ValidationError):
        load_config(bad)


def test_override_and_paths(tmp_path):
    cfg = override(PipelineConfig(), "evaluation", iou_min=0.3, window_s=None)
    assert cfg.evaluation.iou_min == 0.3 and cfg.evaluation.window_s == 3.0
    with pytest.raises(ValidationError):
        override(cfg, "evaluation", iou_min=3.0)
    assert require_path(tmp_path, "dir", "dir") == tmp_path
    with pytest.raises(ValidationError):
        require_path("", "thing")
    with pytest.raises(ValidationError):
        require_path(tmp_path / "x", "thing")
    with pytest.raises(ValidationError):
        require_path(tmp_path, "thing", "file")
