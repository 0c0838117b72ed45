"""Energy-based silence removal and integer-factor anti-aliased decimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import oaconvolve

from .audio_io import AudioBuffer


class EmptyInput(ValueError):
    pass


class NonIntegerDecimation(ValueError):
    pass


@dataclass(frozen=True)
class SilenceParams:
    """Segment length in samples, threshold ratio and tolerated silent-segment run."""

    frame_len: int
    theta_ratio: float = 0.25
    tolerance_c: int = 25

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")
        if not 0.0 < self.theta_ratio < 1.0:
            raise ValueError("theta_ratio must lie in (0, 1)")
        if self.tolerance_c < 0:
            raise ValueError("tolerance_c must be >= 0")

    @classmethod
    def for_rate(cls, sample_rate: int, **kw) -> "SilenceParams":
        # 50 ms segments: 800 samples at 16 kHz, 9600 at 192 kHz
        return cls(frame_len=int(round(0.05 * sample_rate)), **kw)


def silence_threshold(powers: np.ndarray, theta_ratio: float) -> float:
    lo, hi = float(powers.min()), float(powers.max())
    return lo + (hi - lo) * theta_ratio


def retained_frames(powers: np.ndarray, theta_ratio: float, tolerance_c: int) -> np.ndarray:
    """Boolean keep-mask over segments for the silence-run counter rule.

    The counter resets on any segment whose mean-square power exceeds the
    threshold and increments otherwise; a segment is kept while the counter
    is at most ``tolerance_c``.
    """
    powers = np.asarray(powers, dtype=np.float64)
    theta = silence_threshold(powers, theta_ratio)
    if powers.max() == powers.min() and powers.max() > 0:
        # constant nonzero power is not silence
        return np.ones(len(powers), dtype=bool)
    keep = np.empty(len(powers), dtype=bool)
    counter = 0
    for i, p in enumerate(powers):
        counter = 0 if p > theta else counter + 1
        keep[i] = counter <= tolerance_c
    return keep


def remove_silence(buffer: AudioBuffer, params: SilenceParams | None = None) -> AudioBuffer:
    x = np.asarray(buffer.samples)
    if len(x) == 0:
        raise EmptyInput("cannot remove silence from an empty buffer")
    params = params or SilenceParams.for_rate(buffer.sample_rate)
    k = params.frame_len
    n_full = len(x) // k
    if n_full == 0:
        return buffer
    frames = x[: n_full * k].reshape(n_full, k).astype(np.float64)
    powers = np.mean(frames**2, axis=1)
    keep = retained_frames(powers, params.theta_ratio, params.tolerance_c)
    parts = [x[: n_full * k].reshape(n_full, k)[keep].reshape(-1), x[n_full * k :]]
    return buffer.with_samples(np.concatenate(parts))


@dataclass(frozen=True)
class ResampleSpec:
    source_rate: int = 192000
    target_rate: int = 16000
    filter_taps: int = 255
    stopband_attenuation: float = 80.0

    def __post_init__(self):
        if self.filter_taps % 2 != 1:
            raise ValueError("filter_taps must be odd")

    @property
    def factor(self) -> int:
        if self.target_rate <= 0 or self.source_rate % self.target_rate:
            raise NonIntegerDecimation(
                f"{self.source_rate} Hz is not an integer multiple of {self.target_rate} Hz"
            )
        return self.source_rate // self.target_rate


def kaiser_beta(attenuation_db: float) -> float:
    a = attenuation_db
    if a > 50:
        return 0.1102 * (a - 8.7)
    if a >= 21:
        return 0.5842 * (a - 21) ** 0.4 + 0.07886 * (a - 21)
    return 0.0


def kaiser_lowpass(cutoff: float, rate: float, taps: int, attenuation_db: float = 80.0) -> np.ndarray:
    """Kaiser-windowed sinc low-pass with unit DC gain; ``cutoff`` is the -6 dB point in Hz."""
    n = np.arange(taps) - (taps - 1) / 2
    fc = min(cutoff / rate, 0.5)
    h = 2 * fc * np.sinc(2 * fc * n) * np.kaiser(taps, kaiser_beta(attenuation_db))
    return h / h.sum()


def kaiser_taps_for(transition_hz: float, rate: float, attenuation_db: float) -> int:
    # Kaiser's length estimate, rounded up to an odd count
    n = int(np.ceil((attenuation_db - 7.95) / (2.285 * 2 * np.pi * transition_hz / rate))) + 1
    return n | 1


def _mirror_extend(x: np.ndarray, pad: int) -> np.ndarray:
    pad = min(pad, len(x) - 1)
    if pad <= 0:
        return x
    return np.pad(x, pad, mode="reflect")


def fir_filter_same(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Zero-phase-delay application of an odd-length linear-phase FIR, same output length.

    Edges are mirror-extended so constants pass untouched and no step is introduced.
    """
    half = (len(h) - 1) // 2
    ext = _mirror_extend(np.asarray(x, dtype=np.float64), half)
    pad = (len(ext) - len(x)) // 2
    full = np.convolve(ext, h) if len(ext) < 4096 else oaconvolve(ext, h)
    return full[half + pad : half + pad + len(x)]


def downsample(buffer: AudioBuffer, spec: ResampleSpec | None = None) -> AudioBuffer:
    """Low-pass at 0.9 of the target Nyquist, then keep every D-th sample.

    Output length is ceil(len / D); with D = 1 this is the plain low-pass.
    """
    spec = spec or ResampleSpec(source_rate=buffer.sample_rate)
    if buffer.sample_rate != spec.source_rate:
        raise ValueError(f"buffer rate {buffer.sample_rate} != spec source rate {spec.source_rate}")
    d = spec.factor
    x = np.asarray(buffer.samples, dtype=np.float64)
    if len(x) == 0:
        return AudioBuffer(x, spec.target_rate)
    h = kaiser_lowpass(0.9 * spec.target_rate / 2, spec.source_rate, spec.filter_taps,
                       spec.stopband_attenuation)
    return AudioBuffer(fir_filter_same(x, h)[::d], spec.target_rate)
