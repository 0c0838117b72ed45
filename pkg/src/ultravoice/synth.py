"""Synthetic wideband utterances and replay-device models.

Genuine utterances alternate voiced syllables (an impulse train through
formant resonators, band-limited below 8 kHz) with fricative noise bursts
whose spectrum follows a per-speaker envelope over 16-48 kHz. Replay devices
are FIR filters: a commercial loudspeaker chain low-passes, an ultrasonic
speaker high-passes. Only spectral-energy structure is modelled.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio_io import AudioBuffer, write_wav
from .preprocess import fir_filter_same, kaiser_lowpass, kaiser_taps_for
from .rng import SplitMix64, hash_words

RATE = 192000
HF_BAND_EDGES = np.linspace(16000.0, 48000.0, 9)  # 8 envelope bands, 4 kHz each
NOISE_FLOOR_RMS = 3e-5
PEAK = 0.5


@dataclass(frozen=True)
class SpeakerProfile:
    pitch: float
    formant_centers: tuple[float, ...]
    hf_envelope: tuple[float, ...] = field(repr=False)  # linear gains, one per band
    fricative_rate: float
    seed: int


def make_profile(speaker_index: int, seed: int = 0) -> SpeakerProfile:
    rng = SplitMix64(hash_words(seed, speaker_index, 0x5EED))
    pitch = rng.uniform(None, 90.0, 260.0)
    formants = (rng.uniform(None, 320.0, 850.0), rng.uniform(None, 950.0, 2400.0),
                rng.uniform(None, 2500.0, 3600.0))
    gains_db = rng.uniform(len(HF_BAND_EDGES) - 1, -8.0, 8.0)
    return SpeakerProfile(
        pitch=pitch,
        formant_centers=formants,
        hf_envelope=tuple(10 ** (gains_db / 20)),
        fricative_rate=rng.uniform(None, 2.8, 3.6),
        seed=hash_words(seed, speaker_index),
    )


def _raised_cosine_gate(n: int, starts, stops, ramp: int) -> np.ndarray:
    g = np.zeros(n)
    for a, b in zip(starts, stops):
        a, b = max(a, 0), min(b, n)
        if b <= a:
            continue
        seg = np.ones(b - a)
        r = min(ramp, (b - a) // 2)
        if r > 0:
            edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
            seg[:r] *= edge
            seg[-r:] *= edge[::-1]
        g[a:b] = np.maximum(g[a:b], seg)
    return g


def _resonator(x: np.ndarray, freq: float, bandwidth: float, rate: int) -> np.ndarray:
    r = np.exp(-np.pi * bandwidth / rate)
    theta = 2 * np.pi * freq / rate
    a = [1.0, -2 * r * np.cos(theta), r * r]
    # unit gain at the centre frequency
    gain = abs(np.polyval(a[::-1], np.exp(-1j * theta)))
    return lfilter([gain], a, x)


def _spectral_mask(freqs: np.ndarray, points_hz, points_db) -> np.ndarray:
    db = np.interp(freqs, points_hz, points_db, left=-np.inf, right=-np.inf)
    with np.errstate(over="ignore"):
        return np.where(np.isfinite(db), 10 ** (db / 20), 0.0)


def _timeline(rng: SplitMix64, n: int, rate: int, profile: SpeakerProfile):
    """Voiced segment and fricative burst sample ranges."""
    voiced, bursts = [], []
    t = int(rng.uniform(None, 0.02, 0.06) * rate)
    mean_syllable = 1.0 / profile.fricative_rate
    while t < n:
        v_len = int(rng.uniform(None, 0.55, 0.75) * mean_syllable * rate)
        voiced.append((t, t + v_len))
        b_len = int(rng.uniform(None, 0.05, 0.09) * rate)
        overlap = int(rng.uniform(None, 0.03, 0.05) * rate)
        # bursts straddle the end of voicing, as in voiced fricatives
        b_start = t + v_len - overlap
        bursts.append((b_start, b_start + b_len))
        gap = int(rng.uniform(None, 0.03, 0.08) * rate)
        t = b_start + b_len + gap
    return voiced, bursts


def _unit_rms(sig: np.ndarray, active: np.ndarray) -> np.ndarray:
    if not active.any():
        return sig
    return sig / (np.sqrt(np.mean(sig[active] ** 2)) + 1e-12)


def gen_genuine(profile: SpeakerProfile, duration: float, rate: int = RATE, seed: int = 0) -> AudioBuffer:
    """A deterministic synthetic live utterance of ``duration`` seconds."""
    if rate != RATE:
        raise ValueError(f"synthetic speech is generated at {RATE} Hz")
    n = int(round(duration * rate))
    rng = SplitMix64(hash_words(profile.seed, seed))
    voiced, bursts = _timeline(rng, n, rate, profile)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)

    # voiced track: jittered glottal impulses through formant resonators
    f0 = np.zeros(n)
    for a, b in voiced:
        a, b = max(a, 0), min(b, n)
        if b > a:
            base = profile.pitch * rng.uniform(None, 0.94, 1.06)
            tt = np.arange(b - a) / rate
            f0[a:b] = base * (1 + 0.03 * np.sin(2 * np.pi * 4.0 * tt + rng.uniform(None, 0, 6.28)))
    phase = np.cumsum(f0) / rate
    pulses = np.zeros(n)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0
    gate_v = _raised_cosine_gate(n, *zip(*voiced), ramp=int(0.015 * rate)) if voiced else np.zeros(n)
    src = lfilter([1.0], [1.0, -0.97], pulses)
    v = np.zeros(n)
    for k, fc in enumerate(profile.formant_centers):
        v += _resonator(src, fc, 90.0 + 40.0 * k, rate) * (0.5 ** k)
    v *= gate_v
    v_spec = np.fft.rfft(v) * _spectral_mask(freqs, [0, 7000, 7800], [0, 0, -120])
    v = np.fft.irfft(v_spec, n)
    v = _unit_rms(v, gate_v > 0.5)

    # fricatives: white noise coloured by the speaker's ultrasonic envelope
    centres = 0.5 * (HF_BAND_EDGES[:-1] + HF_BAND_EDGES[1:])
    env_db = 20 * np.log10(np.asarray(profile.hf_envelope)) + rng.uniform(len(centres), -0.5, 0.5)
    pts_hz = [3000.0, 16000.0, *centres, 48000.0, 50000.0]
    pts_db = [-25.0, env_db[0] - 3.0, *env_db, env_db[-1], -140.0]
    noise = np.fft.irfft(np.fft.rfft(rng.normal(n)) * _spectral_mask(freqs, pts_hz, pts_db), n)
    gate_f = _raised_cosine_gate(n, *zip(*bursts), ramp=int(0.008 * rate)) if bursts else np.zeros(n)
    burst_gain = np.ones(n)
    for a, b in bursts:
        burst_gain[max(a, 0):min(b, n)] = 10 ** (rng.uniform(None, -1.5, 1.5) / 20)
    f = noise * gate_f * burst_gain
    f = _unit_rms(f, gate_f > 0.5)

    x = 0.1 * v + 0.03 * f
    peak = np.abs(x).max() if n else 0.0
    if peak == 0:  # too short for any segment: noise floor only
        x, peak = rng.normal(n) * NOISE_FLOOR_RMS, PEAK
    x += NOISE_FLOOR_RMS * rng.normal(n) / PEAK * peak
    x *= PEAK / np.abs(x).max()
    return AudioBuffer(x.astype(np.float32), rate)


class DeviceKind(str, Enum):
    COMMERCIAL_REPLAY = "commercial_replay"
    ULTRASONIC_REPLAY = "ultrasonic_replay"


@dataclass(frozen=True)
class DeviceModel:
    kind: DeviceKind
    cutoff: float
    transition: float | None = None
    attenuation_db: float = 80.0

    def __post_init__(self):
        if self.kind == DeviceKind.COMMERCIAL_REPLAY and self.cutoff > 24000 and self.cutoff < RATE / 2:
            raise ValueError("a commercial replay chain low-passes at or below 24 kHz")
        if self.kind == DeviceKind.ULTRASONIC_REPLAY and self.cutoff < 1000:
            raise ValueError("an ultrasonic replay chain high-passes at or above 1 kHz")


def apply_device(genuine: AudioBuffer, device: DeviceModel) -> AudioBuffer:
    """Filter ``genuine`` through the device; ``cutoff`` is the stopband edge.

    Low-pass chains put the whole transition band below the cutoff and
    high-pass chains put it above, so nothing on the far side of the cutoff
    survives at more than ``-attenuation_db``.
    """
    if genuine.sample_rate != RATE:
        raise ValueError(f"devices operate on {RATE} Hz audio")
    x = np.asarray(genuine.samples, dtype=np.float64)
    nyq = genuine.sample_rate / 2
    if device.kind == DeviceKind.COMMERCIAL_REPLAY:
        if device.cutoff >= nyq:
            return genuine.with_samples(x)
        tw = device.transition or 2000.0
        taps = kaiser_taps_for(tw, RATE, device.attenuation_db)
        h = kaiser_lowpass(device.cutoff - tw / 2, RATE, taps, device.attenuation_db)
    else:
        tw = device.transition or 500.0
        taps = kaiser_taps_for(tw, RATE, device.attenuation_db)
        h = -kaiser_lowpass(device.cutoff + tw / 2, RATE, taps, device.attenuation_db)
        h[(taps - 1) // 2] += 1.0
    return genuine.with_samples(fir_filter_same(x, h))


def corpus_devices(rng: SplitMix64) -> list[DeviceModel]:
    return [
        DeviceModel(DeviceKind.COMMERCIAL_REPLAY, rng.uniform(None, 16000.0, 24000.0)),
        DeviceModel(DeviceKind.ULTRASONIC_REPLAY, rng.uniform(None, 1000.0, 2000.0)),
    ]


@dataclass(frozen=True)
class ManifestRow:
    path: str
    speaker: str
    kind: str


MANIFEST_NAME = "manifest.tsv"


def speaker_id(index: int) -> str:
    return f"spk{index:03d}"


def iter_corpus(n_speakers: int, utt_per_speaker: int, seed: int, duration: float = 2.0):
    """Yield ``(speaker, utterance_index, kind, buffer)`` in a fixed order."""
    if n_speakers < 2:
        raise ValueError("need at least two speakers")
    for s in range(n_speakers):
        profile = make_profile(s, seed)
        for u in range(utt_per_speaker):
            g = gen_genuine(profile, duration, RATE, seed=hash_words(seed, s, u))
            yield speaker_id(s), u, "genuine", g
            for dev in corpus_devices(SplitMix64(hash_words(seed, s, u, 0xDE7))):
                out = apply_device(g, dev)
                yield speaker_id(s), u, dev.kind.value, out.with_samples(
                    np.asarray(out.samples, dtype=np.float32))


def gen_corpus(n_speakers: int, utt_per_speaker: int, seed: int, out_dir, duration: float = 2.0) -> list[ManifestRow]:
    """Write float-32 WAVs plus ``manifest.tsv`` (columns path, speaker, kind; paths relative)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spk, u, kind, buf in iter_corpus(n_speakers, utt_per_speaker, seed, duration):
        rel = f"{spk}/{spk}_u{u:03d}_{kind}.wav"
        (out / spk).mkdir(exist_ok=True)
        write_wav(buf, out / rel)
        rows.append(ManifestRow(rel, spk, kind))
    write_manifest(rows, out / MANIFEST_NAME)
    return rows


def write_manifest(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("path\tspeaker\tkind\n")
        for r in rows:
            fh.write(f"{r.path}\t{r.speaker}\t{r.kind}\n")


def read_manifest(path) -> list[ManifestRow]:
    """Rows with paths resolved against the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:3] != ["path", "speaker", "kind"]:
            raise ValueError(f"{path}: bad manifest header {header}")
        for line in fh:
            if not line.strip():
                continue
            p, spk, kind = line.rstrip("\n").split("\t")[:3]
            rows.append(ManifestRow(p if os.path.isabs(p) else os.path.join(base, p), spk, kind))
    return rows
