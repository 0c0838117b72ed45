"""Long-term-average (LTA) ultrasound spectra and per-speaker voiceprints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectrum import FrameSet, Spectrogram, crop_band, top_m_frames

ANALYSIS_BAND = (16000.0, 48000.0)


class EmptyFrameSet(ValueError):
    pass


class MismatchedBands(ValueError):
    pass


@dataclass(frozen=True)
class LtaVector:
    values: np.ndarray = field(repr=False)
    band: tuple[float, float]
    frames_used: int


@dataclass(frozen=True)
class VoiceprintP:
    values: np.ndarray = field(repr=False)
    band: tuple[float, float]
    sentence_count: int


def spectrogram_band(spec: Spectrogram) -> tuple[float, float]:
    res = spec.freq_resolution
    return (spec.first_bin * res, (spec.first_bin + spec.n_bins) * res)


def lta(spec: Spectrogram, frames: FrameSet) -> LtaVector:
    """Per-bin mean of the dB spectrogram over the selected frames."""
    idx = np.asarray(frames.indices, dtype=int)
    if idx.size == 0:
        raise EmptyFrameSet("no frames selected")
    if idx.min() < 0 or idx.max() >= spec.n_frames:
        raise IndexError("frame index outside the spectrogram")
    return LtaVector(spec.values[:, idx].mean(axis=1), spectrogram_band(spec), int(idx.size))


def utterance_lta(spec: Spectrogram, band=ANALYSIS_BAND, m: int = 100, f_threshold: float = 20000.0) -> LtaVector:
    """LTA over ``band`` of the top-``m`` ultrasonic frames of a full-band spectrogram."""
    return lta(crop_band(spec, *band), top_m_frames(spec, m, f_threshold))


def voiceprint(ltas: list[LtaVector]) -> VoiceprintP:
    if not ltas:
        raise ValueError("need at least one LTA vector")
    band = ltas[0].band
    n = len(ltas[0].values)
    for v in ltas[1:]:
        if v.band != band or len(v.values) != n:
            raise MismatchedBands("LTA vectors cover different bands")
    return VoiceprintP(np.mean([v.values for v in ltas], axis=0), band, len(ltas))


def within_between_variance(ltas_by_speaker: dict) -> tuple[float, float]:
    """Bin-averaged LTA variance within speakers and across speaker voiceprints.

    Returns ``(mean over speakers of the within-speaker variance, variance of voiceprints)``,
    each averaged over frequency bins.
    """
    within = []
    prints = []
    for ltas in ltas_by_speaker.values():
        stack = np.stack([v.values for v in ltas])
        within.append(stack.var(axis=0).mean())
        prints.append(voiceprint(ltas).values)
    between = np.stack(prints).var(axis=0).mean()
    return float(np.mean(within)), float(between)
