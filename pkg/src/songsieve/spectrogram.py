"""dB STFT matrices and fixed-geometry log-frequency spectrogram images."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import signal

from .audio_io import AudioClip
from .errors import ClipTooShort

IMAGE_WIDTH_PX = 930
IMAGE_HEIGHT_PX = 462


@dataclass(frozen=True)
class SpectrogramParams:
    n_fft: int = 2048
    hop: int = 512
    window: str = "hann"
    fmin_hz: float = 1.0
    fmax_hz: float = 16000.0
    db_floor: float = -80.0
    out_width_px: int = IMAGE_WIDTH_PX
    out_height_px: int = IMAGE_HEIGHT_PX

    def __post_init__(self):
        if not (self.n_fft >= self.hop > 0):
            raise ValueError(f"need n_fft >= hop > 0, got n_fft={self.n_fft} hop={self.hop}")
        if not (0 < self.fmin_hz < self.fmax_hz):
            raise ValueError(f"need 0 < fmin_hz < fmax_hz, got {self.fmin_hz}, {self.fmax_hz}")
        if self.out_width_px <= 0 or self.out_height_px <= 0:
            raise ValueError("output image dimensions must be positive")
        if self.db_floor >= 0:
            raise ValueError("db_floor must be negative")

    def frequency_bounds(self, sample_rate_hz: int) -> tuple[float, float]:
        """Display band after clamping to the STFT's representable range.

        The lower bound is raised to the first positive bin so the log axis
        never touches 0 Hz; the upper bound is capped at Nyquist.
        """
        first_bin = sample_rate_hz / self.n_fft
        lo = max(self.fmin_hz, 1.0, first_bin)
        hi = min(self.fmax_hz, sample_rate_hz / 2)
        if not lo < hi:
            raise ValueError(f"empty frequency band after clamping: [{lo}, {hi}]")
        return lo, hi


@dataclass(frozen=True)
class SpectrogramMatrix:
    values: np.ndarray = field(repr=False)  # frames x bins, dB
    frame_times_s: np.ndarray = field(repr=False)
    bin_freqs_hz: np.ndarray = field(repr=False)
    sample_rate_hz: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class SpectrogramImage:
    pixels: np.ndarray = field(repr=False)  # H x W uint8, row 0 = fmax
    params: SpectrogramParams
    duration_s: float
    source_id: str = ""


def compute_stft_db(clip: AudioClip, params: SpectrogramParams = SpectrogramParams()) -> SpectrogramMatrix:
    x = clip.samples
    if len(x) < params.n_fft:
        raise ClipTooShort(f"clip has {len(x)} samples, n_fft is {params.n_fft}", source=clip.source_id or None)
    win = signal.get_window(params.window, params.n_fft, fftbins=True)
    frames = np.lib.stride_tricks.sliding_window_view(x, params.n_fft)[:: params.hop]
    mag = np.abs(np.fft.rfft(frames * win, axis=1))
    peak = mag.max()
    floor = params.db_floor
    if peak > 0:
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(mag / peak)
        db = np.maximum(db, floor)
    else:
        db = np.full(mag.shape, floor)
    sr = clip.sample_rate_hz
    times = (np.arange(frames.shape[0]) * params.hop + params.n_fft / 2) / sr
    freqs = np.fft.rfftfreq(params.n_fft, 1.0 / sr)
    return SpectrogramMatrix(db, times, freqs, sr)


def row_frequencies(params: SpectrogramParams, sample_rate_hz: int) -> np.ndarray:
    """Center frequency of each image row; row 0 is the top (fmax)."""
    lo, hi = params.frequency_bounds(sample_rate_hz)
    h = params.out_height_px
    if h == 1:
        return np.array([lo])
    exponent = (h - 1 - np.arange(h)) / (h - 1)
    return lo * (hi / lo) ** exponent


def column_times(width_px: int, duration_s: float) -> np.ndarray:
    """Center time of each image column over [0, duration_s]."""
    return (np.arange(width_px) + 0.5) * duration_s / width_px


def time_to_column(t_s: float, width_px: int, duration_s: float) -> int:
    return int(round(t_s / duration_s * width_px))


def _interp_weights(query: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Neighbour indices and weights for linear interpolation, edge-clamped."""
    n = len(grid)
    if n == 1:
        z = np.zeros(len(query), dtype=int)
        return z, z, np.zeros(len(query))
    q = np.clip(query, grid[0], grid[-1])
    hi = np.clip(np.searchsorted(grid, q, side="right"), 1, n - 1)
    lo = hi - 1
    w = (q - grid[lo]) / (grid[hi] - grid[lo])
    return lo, hi, w


def render_log_spectrogram(
    matrix: SpectrogramMatrix,
    params: SpectrogramParams,
    duration_s: float,
    source_id: str = "",
) -> SpectrogramImage:
    """Resample a dB matrix onto a log-frequency, linear-time pixel grid.

    Bilinear interpolation in (frame time, bin frequency); gray level is
    linear in dB with ``db_floor`` at 0 and 0 dB at 255.
    """
    if matrix.values.size == 0:
        raise ValueError("empty spectrogram matrix")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rows_hz = row_frequencies(params, matrix.sample_rate_hz)
    cols_s = column_times(params.out_width_px, duration_s)

    f_lo, f_hi, f_w = _interp_weights(rows_hz, matrix.bin_freqs_hz)
    t_lo, t_hi, t_w = _interp_weights(cols_s, matrix.frame_times_s)

    v = matrix.values
    # frequency first: (frames, H)
    by_row = v[:, f_lo] * (1 - f_w) + v[:, f_hi] * f_w
    grid = by_row[t_lo, :] * (1 - t_w)[:, None] + by_row[t_hi, :] * t_w[:, None]  # (W, H)

    floor = params.db_floor
    gray = np.round((np.clip(grid, floor, 0.0) - floor) / (-floor) * 255.0)
    pixels = np.ascontiguousarray(gray.T.astype(np.uint8))
    return SpectrogramImage(pixels, params, float(duration_s), source_id)


def clip_to_image(clip: AudioClip, params: SpectrogramParams = SpectrogramParams()) -> SpectrogramImage:
    matrix = compute_stft_db(clip, params)
    return render_log_spectrogram(matrix, params, clip.duration_s, clip.source_id)


def save_image(image: SpectrogramImage, png_path: str | Path) -> tuple[Path, Path]:
    """Write the PNG and its JSON sidecar (same stem, ``.json``)."""
    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.pixels).save(png_path, format="PNG", optimize=False)
    sidecar = png_path.with_suffix(".json")
    meta = {
        "source_id": image.source_id,
        "duration_s": image.duration_s,
        "width_px": int(image.pixels.shape[1]),
        "height_px": int(image.pixels.shape[0]),
        "params": asdict(image.params),
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return png_path, sidecar


def load_image(png_path: str | Path) -> SpectrogramImage:
    png_path = Path(png_path)
    meta = json.loads(png_path.with_suffix(".json").read_text())
    pixels = np.asarray(Image.open(png_path).convert("L"))
    return SpectrogramImage(pixels, SpectrogramParams(**meta["params"]), meta["duration_s"], meta["source_id"])
