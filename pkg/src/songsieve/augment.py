"""Training-set augmentation with noise/gain variants and background negatives."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio_io import PIPELINE_RATE_HZ, AudioClip, load_wav, resample
from .errors import InsufficientBackgroundItems, SilentClip

# ESC-50 categories that are birds
DEFAULT_EXCLUDED = ("bird", "rooster", "hen", "crow")


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation settings.

    ``background_fraction`` f is the share of the *final* training set that
    is background-only: with n positives, b = round(f * n / (1 - f)) items
    are added so that b / (n + b) is about f.
    """

    snr_db_range: tuple[float, float] = (10.0, 30.0)
    gain_db_range: tuple[float, float] = (-6.0, 6.0)
    background_fraction: float = 0.25
    excluded_background_labels: tuple[str, ...] = DEFAULT_EXCLUDED
    seed: int = 42
    clip_duration_s: float = 60.0
    sample_rate_hz: int = PIPELINE_RATE_HZ
    crossfade_s: float = 0.1

    def __post_init__(self):
        if not 0 <= self.background_fraction < 1:
            raise ValueError("background_fraction must lie in [0, 1)")
        if self.snr_db_range[0] > self.snr_db_range[1] or self.gain_db_range[0] > self.gain_db_range[1]:
            raise ValueError("ranges must be ordered (min, max)")


def add_noise(clip: AudioClip, snr_db: float, seed: int = 42) -> AudioClip:
    """Add white Gaussian noise at ``snr_db`` relative to the clip's power.

    ``snr_db = inf`` returns the clip unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return clip
    power = float(np.mean(clip.samples ** 2))
    if power <= 0:
        raise SilentClip("SNR is undefined for a silent clip", source=clip.source_id or None)
    noise_power = power / 10 ** (snr_db / 10)
    noise = np.random.default_rng(seed).normal(0.0, math.sqrt(noise_power), len(clip))
    return clip.with_samples(clip.samples + noise)


def scale_intensity(clip: AudioClip, gain_db: float) -> AudioClip:
    if gain_db == 0:
        return clip
    return clip.with_samples(clip.samples * 10 ** (gain_db / 20))


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for item ``index``, independent of processing order."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def augment_clip(clip: AudioClip, config: AugmentConfig, index: int) -> tuple[AudioClip, float, float]:
    """Noise + gain variant of a clip with per-item random parameters.

    Returns the clip and the (snr_db, gain_db) drawn for it.
    """
    rng = item_rng(config.seed, index)
    snr = float(rng.uniform(*config.snr_db_range))
    gain = float(rng.uniform(*config.gain_db_range))
    noise_seed = int(rng.integers(2**32))
    out = clip
    if np.any(clip.samples):
        out = add_noise(out, snr, noise_seed)
    return scale_intensity(out, gain), snr, gain


@dataclass(frozen=True)
class BackgroundItem:
    path: Path
    label: str


def read_background_metadata(meta_csv: str | Path, audio_dir: str | Path | None = None) -> list[BackgroundItem]:
    """Items from an ESC-50 style metadata CSV.

    Needs a ``filename`` column and a ``label`` or ``category`` column; paths
    are resolved against ``audio_dir`` (default: the CSV's folder, or its
    sibling ``audio`` folder when that exists).
    """
    meta_csv = Path(meta_csv)
    if audio_dir is None:
        sibling = meta_csv.parent.parent / "audio"
        audio_dir = sibling if sibling.is_dir() else meta_csv.parent
    audio_dir = Path(audio_dir)
    with open(meta_csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        label_col = "label" if "label" in (reader.fieldnames or ()) else "category"
        return [BackgroundItem(audio_dir / row["filename"], row[label_col]) for row in reader]


def is_excluded(label: str, excluded: Sequence[str]) -> bool:
    low = label.casefold()
    return any(e.casefold() in low for e in excluded)


def background_count(n_train: int, fraction: float) -> int:
    """b such that b / (n_train + b) is closest to ``fraction`` by rounding."""
    return int(math.floor(fraction * n_train / (1 - fraction) + 0.5))


def mix_background_set(
    n_train: int, background_items: Sequence[BackgroundItem], config: AugmentConfig = AugmentConfig()
) -> list[BackgroundItem]:
    """Seeded sample of background items sized to the configured fraction."""
    if n_train <= 0:
        raise ValueError("n_train must be positive")
    eligible = [it for it in background_items if not is_excluded(it.label, config.excluded_background_labels)]
    b = background_count(n_train, config.background_fraction)
    if b == 0:
        return []
    if b > len(eligible):
        raise InsufficientBackgroundItems(f"need {b} background items, {len(eligible)} available after exclusion")
    rng = np.random.default_rng(config.seed)
    chosen = np.sort(rng.choice(len(eligible), size=b, replace=False))
    return [eligible[i] for i in chosen]


def tile_to_length(samples: np.ndarray, n_out: int, crossfade: int) -> np.ndarray:
    """Loop ``samples`` to ``n_out`` samples, joining copies with a linear crossfade."""
    if len(samples) == 0:
        return np.zeros(n_out)
    if len(samples) >= n_out:
        return samples[:n_out].copy()
    xf = min(crossfade, len(samples) // 2)
    out = samples.copy()
    fade_in = np.linspace(0.0, 1.0, xf + 2)[1:-1] if xf > 0 else np.zeros(0)
    while len(out) < n_out:
        if xf > 0:
            joint = out[-xf:] * (1 - fade_in) + samples[:xf] * fade_in
            out = np.concatenate([out[:-xf], joint, samples[xf:]])
        else:
            out = np.concatenate([out, samples])
    return out[:n_out]


def prepare_background_clip(clip: AudioClip, config: AugmentConfig = AugmentConfig()) -> AudioClip:
    """Resample to the pipeline rate and loop/trim to the clip length."""
    clip = resample(clip, config.sample_rate_hz)
    n_out = int(round(config.clip_duration_s * config.sample_rate_hz))
    crossfade = int(round(config.crossfade_s * config.sample_rate_hz))
    return clip.with_samples(tile_to_length(clip.samples, n_out, crossfade))


def load_background_clip(item: BackgroundItem, config: AugmentConfig = AugmentConfig()) -> AudioClip:
    return prepare_background_clip(load_wav(item.path), config)
