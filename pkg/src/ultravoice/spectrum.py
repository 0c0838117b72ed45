"""dB-scale STFT spectrograms, band cropping and ultrasonic frame selection.

Magnitude convention: ``|X[k]| = |sum_n w[n] x[n] exp(-2j pi k n / n_fft)|``
with a periodic Hann window and no further scaling. With this convention the
squared magnitudes over all ``n_fft`` bins sum to ``n_fft * sum((w x)**2)``
(Parseval); the one-sided matrix keeps bins ``0 .. n_fft/2 - 1``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import AudioBuffer

DB_FLOOR = -100.0


class InputTooShort(ValueError):
    pass


class EmptyBand(ValueError):
    pass


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 2048
    win_len: int = 2048
    hop: int = 512
    window: str = "hann"

    def __post_init__(self):
        if not (self.hop <= self.win_len <= self.n_fft):
            raise ValueError("need hop <= win_len <= n_fft")
        if self.n_fft & (self.n_fft - 1):
            raise ValueError("n_fft must be a power of two")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @classmethod
    def preliminary(cls, sample_rate: int = 192000) -> "StftConfig":
        """10 ms Hann window, 2 ms hop, 2048-point FFT (the short-window analysis preset)."""
        return cls(n_fft=2048, win_len=int(0.010 * sample_rate), hop=int(0.002 * sample_rate))

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.win_len) // self.hop + 1


STFT_DEFAULT = StftConfig()


@dataclass(frozen=True)
class Spectrogram:
    """dB matrix, rows = frequency bins (starting at ``first_bin``), cols = frames."""

    values: np.ndarray = field(repr=False)
    sample_rate: int
    n_fft: int
    hop: int
    db_floor: float = DB_FLOOR
    first_bin: int = 0

    @property
    def freq_resolution(self) -> float:
        return self.sample_rate / self.n_fft

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return (self.first_bin + np.arange(self.n_bins)) * self.freq_resolution


def hann(n: int) -> np.ndarray:
    # periodic Hann, the usual STFT analysis window
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, config: StftConfig) -> np.ndarray:
    n = config.n_frames(len(x))
    idx = np.arange(config.win_len)[None, :] + config.hop * np.arange(n)[:, None]
    return x[idx]


def stft_magnitude(buffer: AudioBuffer, config: StftConfig = STFT_DEFAULT) -> np.ndarray:
    """Linear magnitudes, shape (n_fft/2, L); the Nyquist bin is dropped."""
    x = np.asarray(buffer.samples, dtype=np.float64)
    if len(x) < config.win_len:
        raise InputTooShort(f"need at least {config.win_len} samples, got {len(x)}")
    frames = frame_signal(x, config) * hann(config.win_len)
    spec = np.fft.rfft(frames, n=config.n_fft, axis=1)
    return np.abs(spec[:, : config.n_fft // 2]).T


def to_db(magnitudes: np.ndarray, floor_db: float = DB_FLOOR, reference: float | None = None) -> np.ndarray:
    """``20 log10(m / reference)`` clamped below at ``floor_db``.

    ``reference`` defaults to the global maximum; an all-zero input maps to the floor everywhere.
    """
    m = np.asarray(magnitudes, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("magnitudes must be non-negative")
    ref = float(m.max()) if reference is None else float(reference)
    if ref <= 0:
        return np.full(m.shape, floor_db)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(m / ref)
    return np.maximum(db, floor_db)


def stft(buffer: AudioBuffer, config: StftConfig = STFT_DEFAULT, db_floor: float = DB_FLOOR) -> Spectrogram:
    mags = stft_magnitude(buffer, config)
    return Spectrogram(to_db(mags, db_floor), buffer.sample_rate, config.n_fft, config.hop, db_floor)


def band_rows(spec: Spectrogram, f_low: float, f_high: float) -> slice:
    """Row slice of ``spec`` covering bins with ``f_low <= b * res < f_high``."""
    if not (0 <= f_low < f_high):
        raise EmptyBand(f"empty band [{f_low}, {f_high})")
    res = spec.freq_resolution
    lo_bin = max(math.ceil(f_low / res - 1e-9), spec.first_bin)
    hi_bin = min(math.ceil(f_high / res - 1e-9), spec.first_bin + spec.n_bins)
    if hi_bin <= lo_bin:
        raise EmptyBand(f"band [{f_low}, {f_high}) Hz holds no bins")
    return slice(lo_bin - spec.first_bin, hi_bin - spec.first_bin)


def crop_band(spec: Spectrogram, f_low: float, f_high: float) -> Spectrogram:
    if f_high > spec.sample_rate / 2:
        raise EmptyBand(f"f_high {f_high} exceeds Nyquist")
    rows = band_rows(spec, f_low, f_high)
    return replace(spec, values=spec.values[rows], first_bin=spec.first_bin + rows.start)


@dataclass(frozen=True)
class FrameSet:
    indices: np.ndarray
    source_frames_total: int

    def __len__(self) -> int:
        return len(self.indices)


def top_m_frames(spec: Spectrogram, m: int = 100, f_threshold: float = 20000.0) -> FrameSet:
    """The ``m`` frames with the largest summed dB energy at or above ``f_threshold``.

    Ties go to the lower frame index; indices come back in increasing order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    total = spec.n_frames
    rows = band_rows(spec, f_threshold, spec.sample_rate / 2 + spec.freq_resolution)
    scores = spec.values[rows].sum(axis=0)
    order = np.lexsort((np.arange(total), -scores))
    chosen = np.sort(order[: min(m, total)])
    return FrameSet(chosen, total)


_SPEC_MAGIC = b"UVSPEC01"


def save_spectrogram(spec: Spectrogram, path) -> None:
    """Header (magic, rows, cols, sample_rate, hop, n_fft, first_bin, floor) then rows of LE float32."""
    header = _SPEC_MAGIC + struct.pack(
        "<IIIIIId", spec.n_bins, spec.n_frames, spec.sample_rate, spec.hop, spec.n_fft,
        spec.first_bin, spec.db_floor,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(spec.values, dtype="<f4").tobytes())


def load_spectrogram(path) -> Spectrogram:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != _SPEC_MAGIC:
        raise ValueError(f"{path}: not a spectrogram file")
    rows, cols, rate, hop, n_fft, first_bin, floor = struct.unpack_from("<IIIIIId", data, 8)
    off = 8 + struct.calcsize("<IIIIIId")
    values = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols)
    return Spectrogram(values.astype(np.float64), rate, n_fft, hop, floor, first_bin)
