"""Mono audio clips and the WAV files they come from."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import BurstOutOfRange, EmptyAudio, MalformedHeader, UnsupportedEncoding

PIPELINE_RATE_HZ = 32000
DEFAULT_SEED = 42


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray = field(repr=False)
    sample_rate_hz: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        """Copy of this clip with new samples, clamped to [-1, 1]."""
        return AudioClip(np.clip(samples, -1.0, 1.0), self.sample_rate_hz, self.source_id)


def _integer_scale(dtype: np.dtype) -> tuple[float, float]:
    if dtype == np.uint8:
        return 128.0, 128.0
    bits = np.dtype(dtype).itemsize * 8
    return 0.0, float(2 ** (bits - 1))


def load_wav(path: str | Path) -> AudioClip:
    """Read a PCM WAV file as a mono clip.

    Integer encodings are scaled to [-1, 1]; stereo is averaged to mono.
    24-bit data comes back from scipy left-justified in int32, so the int32
    scale applies to it unchanged.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] not in (b"RIFF", b"RIFX", b"RF64") or head[8:12] != b"WAVE":
        raise MalformedHeader("not a RIFF/WAVE file", source=str(path))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported bit depth" in msg:
            raise UnsupportedEncoding(msg, source=str(path)) from exc
        raise MalformedHeader(msg, source=str(path)) from exc

    if data.ndim == 2 and data.shape[1] > 2:
        raise UnsupportedEncoding(f"{data.shape[1]} channels (1 or 2 supported)", source=str(path))
    if np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        offset, scale = _integer_scale(data.dtype)
        samples = (data.astype(np.float64) - offset) / scale
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise EmptyAudio("WAV file has no samples", source=str(path))
    samples = np.nan_to_num(samples, nan=0.0, posinf=1.0, neginf=-1.0)
    return AudioClip(np.clip(samples, -1.0, 1.0), int(rate), path.stem)


def write_wav(clip: AudioClip, path: str | Path) -> Path:
    """Write ``clip`` as 16-bit PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, clip.sample_rate_hz, pcm)
    return path


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    if target_rate_hz <= 0:
        raise ValueError(f"target_rate_hz must be positive, got {target_rate_hz}")
    if target_rate_hz == clip.sample_rate_hz:
        return clip
    ratio = Fraction(int(target_rate_hz), clip.sample_rate_hz)
    out = signal.resample_poly(clip.samples, ratio.numerator, ratio.denominator, window=("kaiser", 8.0))
    return AudioClip(np.clip(out, -1.0, 1.0), int(target_rate_hz), clip.source_id)


class Burst(NamedTuple):
    start_s: float
    end_s: float
    freq_hz: float
    amplitude: float


def synth_clip(
    bursts: Iterable[Sequence[float]],
    noise_floor_amplitude: float = 0.0,
    duration_s: float = 60.0,
    sample_rate_hz: int = PIPELINE_RATE_HZ,
    seed: int = DEFAULT_SEED,
    source_id: str = "synth",
) -> AudioClip:
    """Sum of sine tone bursts over Gaussian noise.

    ``noise_floor_amplitude`` is the noise standard deviation. Bursts are
    hard-gated (no fade) so their RMS is exactly amplitude/sqrt(2).
    """
    bursts = [Burst(*map(float, b)) for b in bursts]
    n = int(round(duration_s * sample_rate_hz))
    for b in bursts:
        if not (0.0 <= b.start_s < b.end_s <= duration_s):
            raise BurstOutOfRange(f"burst [{b.start_s}, {b.end_s}] outside [0, {duration_s}]")
        if b.amplitude < 0:
            raise BurstOutOfRange(f"negative amplitude {b.amplitude}")
    # only simultaneously active bursts can add up past full scale
    for b in bursts:
        concurrent = sum(o.amplitude for o in bursts if o.start_s <= b.start_s < o.end_s)
        if concurrent > 1.0 + 1e-12:
            raise BurstOutOfRange(f"overlapping burst amplitudes sum to {concurrent} > 1 at {b.start_s} s")

    t = np.arange(n) / sample_rate_hz
    x = np.zeros(n)
    for b in bursts:
        i0 = int(round(b.start_s * sample_rate_hz))
        i1 = int(round(b.end_s * sample_rate_hz))
        x[i0:i1] += b.amplitude * np.sin(2 * np.pi * b.freq_hz * t[i0:i1])
    if noise_floor_amplitude > 0:
        rng = np.random.default_rng(seed)
        x += rng.normal(0.0, noise_floor_amplitude, n)
    return AudioClip(np.clip(x, -1.0, 1.0), sample_rate_hz, source_id)
