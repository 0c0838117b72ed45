"""Replay-attack liveness gate built on four accumulated band energies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio_io import AudioBuffer
from .preprocess import SilenceParams, remove_silence
from .spectrum import STFT_DEFAULT, FrameSet, Spectrogram, StftConfig, stft, top_m_frames
from .voiceprint import EmptyFrameSet


class Verdict(str, Enum):
    LIVE = "Live"
    SPOOF = "Spoof"


@dataclass(frozen=True)
class LivenessConfig:
    low1: float = 24000.0
    high1: float = 48000.0
    low2: float = 1000.0
    high2: float = 4000.0
    m: int = 100
    f_threshold: float = 20000.0

    def __post_init__(self):
        if not (self.low1 < self.high1 and self.low2 < self.high2):
            raise ValueError("band edges must satisfy low < high")


@dataclass(frozen=True)
class BandEnergies:
    """The four scalars the verdict is computed from."""

    ultrasonic: float  # sum of S_p over [low1, high1)
    upto_high1: float  # sum of S_p over [0, high1)
    below_low2: float  # sum of S_p over [0, low2)
    upto_high2: float  # sum of S_p over [0, high2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.ultrasonic, self.upto_high1, self.below_low2, self.upto_high2)


@dataclass(frozen=True)
class LivenessReport:
    r1: float
    r2: float
    verdict: Verdict
    sp_summary: BandEnergies

    @property
    def score(self) -> float:
        """min(r1, r2) with sentinels mapped to -inf; positive exactly when Live."""
        a = -math.inf if math.isinf(self.r1) else self.r1
        b = -math.inf if math.isinf(self.r2) else self.r2
        return min(a, b)


def normalized_cumulative_energy(spec: Spectrogram, frames: FrameSet) -> np.ndarray:
    """Per-bin dB energy summed over the selected frames, minus M times the global cell mean."""
    idx = np.asarray(frames.indices, dtype=int)
    if idx.size == 0:
        raise EmptyFrameSet("no frames selected")
    g = spec.values.mean()
    return spec.values[:, idx].sum(axis=1) - idx.size * g


def _bin_range(f_low: float, f_high: float, freq_resolution: float, n: int) -> slice:
    lo = math.ceil(f_low / freq_resolution - 1e-9)
    hi = min(math.ceil(f_high / freq_resolution - 1e-9), n)
    return slice(lo, hi)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        # fail closed: a sentinel never passes the gate
        return math.copysign(math.inf, num) if num != 0 else -math.inf
    return num / den


def _sums(sp, config: LivenessConfig, freq_resolution: float) -> BandEnergies:
    sp = np.asarray(sp, dtype=np.float64)
    n = len(sp)
    if config.high1 > n * freq_resolution + 1e-9 or config.high2 > n * freq_resolution + 1e-9:
        raise ValueError("S_p does not cover the configured bands")

    def band(lo, hi):
        return float(sp[_bin_range(lo, hi, freq_resolution, n)].sum())

    return BandEnergies(
        ultrasonic=band(config.low1, config.high1),
        upto_high1=band(0.0, config.high1),
        below_low2=band(0.0, config.low2),
        upto_high2=band(0.0, config.high2),
    )


def r1(sp, config: LivenessConfig = LivenessConfig(), freq_resolution: float = 93.75) -> float:
    """Share of normalized energy in [low1, high1) out of [0, high1)."""
    e = _sums(sp, config, freq_resolution)
    return _ratio(e.ultrasonic, e.upto_high1)


def r2(sp, config: LivenessConfig = LivenessConfig(), freq_resolution: float = 93.75) -> float:
    """Share of normalized energy in [0, low2) out of [0, high2)."""
    e = _sums(sp, config, freq_resolution)
    return _ratio(e.below_low2, e.upto_high2)


def liveness_decision(r1_value: float, r2_value: float) -> Verdict:
    ok = all(not math.isinf(v) and not math.isnan(v) and v > 0 for v in (r1_value, r2_value))
    return Verdict.LIVE if ok else Verdict.SPOOF


def report_from_spectrogram(spec: Spectrogram, config: LivenessConfig = LivenessConfig()) -> LivenessReport:
    frames = top_m_frames(spec, config.m, config.f_threshold)
    sp = normalized_cumulative_energy(spec, frames)
    e = _sums(sp, config, spec.freq_resolution)
    a = _ratio(e.ultrasonic, e.upto_high1)
    b = _ratio(e.below_low2, e.upto_high2)
    return LivenessReport(a, b, liveness_decision(a, b), e)


def assess(
    buffer: AudioBuffer,
    config: LivenessConfig = LivenessConfig(),
    stft_config: StftConfig = STFT_DEFAULT,
    silence: SilenceParams | None = None,
    strip_silence: bool = True,
) -> LivenessReport:
    """Full gate on a raw 192 kHz recording: silence removal, STFT, top-M frames, R1/R2."""
    if strip_silence:
        buffer = remove_silence(buffer, silence)
    return report_from_spectrogram(stft(buffer, stft_config), config)
