"""Feature alignment, enrollment and verification.

The order of operations on every incoming 192 kHz recording is fixed:
silence removal, liveness gate, and only then the two-stream embedding
(downsampled waveform windows paired with aligned 8-48 kHz spectrogram crops).
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .liveness import LivenessConfig, LivenessReport, Verdict, report_from_spectrogram
from .nn.checkpoint import model_hash
from .nn.model import TwoStreamModel
from .nn.train import Batch
from .preprocess import ResampleSpec, SilenceParams, downsample, remove_silence
from .spectrum import STFT_DEFAULT, Spectrogram, StftConfig, crop_band, stft

HF_BAND = (8000.0, 48000.0)


class InputTooShort(ValueError):
    pass


class HashMismatch(ValueError):
    pass


class LivenessRejected(ValueError):
    pass


class SpoofDetected(ValueError):
    def __init__(self, report: LivenessReport):
        super().__init__(f"liveness gate rejected input (r1={report.r1:.4g}, r2={report.r2:.4g})")
        self.report = report


class UnknownSpeaker(KeyError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AlignConfig:
    l_win: int = 3200
    l_hop: int = 160
    alpha: int = 12
    stft_hop: int = 512

    def __post_init__(self):
        if (self.l_win * self.alpha) % self.stft_hop:
            raise ValueError("low window must map to a whole number of STFT columns")

    @property
    def h_win(self) -> int:
        return self.l_win * self.alpha // self.stft_hop

    @property
    def exact_h_hop(self) -> float:
        return self.l_hop * self.alpha / self.stft_hop

    @property
    def h_hop(self) -> int:
        return int(math.floor(self.exact_h_hop + 0.5))

    def hf_start(self, k: int) -> int:
        # re-derived from the exact offset each window, so error never accumulates
        return int(math.floor(k * self.exact_h_hop + 0.5))


def align_windows(num_low_samples: int, num_hf_columns: int, cfg: AlignConfig = AlignConfig()):
    """Paired (low-sample range, hf-column range) windows, as ``slice`` objects."""
    if num_low_samples < cfg.l_win or num_hf_columns < cfg.h_win:
        raise InputTooShort(
            f"need {cfg.l_win} low samples and {cfg.h_win} STFT columns, "
            f"got {num_low_samples} and {num_hf_columns}")
    pairs = []
    k = 0
    while True:
        lo = k * cfg.l_hop
        hi = cfg.hf_start(k)
        if lo + cfg.l_win > num_low_samples or hi + cfg.h_win > num_hf_columns:
            break
        pairs.append((slice(lo, lo + cfg.l_win), slice(hi, hi + cfg.h_win)))
        k += 1
    return pairs


@dataclass(frozen=True)
class StreamFeatures:
    low: np.ndarray  # 16 kHz samples
    hf: Spectrogram  # dB crop over HF_BAND
    full: Spectrogram  # complete dB spectrogram (for the liveness gate)


def extract_streams(buffer: AudioBuffer, stft_config: StftConfig = STFT_DEFAULT) -> StreamFeatures:
    """Split a silence-removed 192 kHz buffer into the two model inputs."""
    if buffer.sample_rate != 192000:
        raise ValueError("the two-stream front end expects 192 kHz input")
    full = stft(buffer, stft_config)
    low = downsample(buffer, ResampleSpec(192000, 16000))
    return StreamFeatures(np.asarray(low.samples), crop_band(full, *HF_BAND), full)


def window_inputs(feats: StreamFeatures, cfg: AlignConfig = AlignConfig(),
                  max_windows: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (low windows, hf crops) for all aligned pairs, optionally thinned to ``max_windows``
    evenly spaced pairs."""
    pairs = align_windows(len(feats.low), feats.hf.n_frames, cfg)
    if max_windows is not None and len(pairs) > max_windows:
        pick = np.linspace(0, len(pairs) - 1, max_windows).round().astype(int)
        pairs = [pairs[i] for i in pick]
    low = np.stack([feats.low[a] for a, _ in pairs]).astype(np.float32)
    high = np.stack([feats.hf.values[:, b] for _, b in pairs]).astype(np.float32)[:, None]
    return low, high


@dataclass(frozen=True)
class SpeakerEmbedding:
    values: np.ndarray = field(repr=False)
    speaker_id: str | None = None


def window_embeddings(model: TwoStreamModel, low: np.ndarray, high: np.ndarray, chunk: int = 4) -> np.ndarray:
    out = [model.embed(low[i : i + chunk], high[i : i + chunk]) for i in range(0, len(low), chunk)]
    return np.concatenate(out, axis=0)


def utterance_embeddings(buffer192k: AudioBuffer, model: TwoStreamModel, cfg: AlignConfig = AlignConfig(),
                         max_windows: int | None = None) -> list[SpeakerEmbedding]:
    """Embeddings of every aligned window of a silence-removed 192 kHz utterance."""
    low, high = window_inputs(extract_streams(buffer192k), cfg, max_windows)
    return [SpeakerEmbedding(e) for e in window_embeddings(model, low, high)]


def utterance_embedding(buffer192k: AudioBuffer, model: TwoStreamModel, cfg: AlignConfig = AlignConfig(),
                        max_windows: int | None = None, speaker_id: str | None = None) -> SpeakerEmbedding:
    """Mean of the window embeddings."""
    windows = utterance_embeddings(buffer192k, model, cfg, max_windows)
    return SpeakerEmbedding(np.mean([w.values for w in windows], axis=0).astype(np.float32), speaker_id)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class VerifyDecision:
    similarity: float
    gamma: float
    accepted: bool


def mean_cosine(enrolled: list[np.ndarray], emb) -> float:
    return float(np.mean([cosine_similarity(e, emb) for e in enrolled]))


def decide(similarity: float, gamma: float) -> VerifyDecision:
    return VerifyDecision(similarity, gamma, similarity >= gamma)


_STORE_MAGIC = b"UVSTORE\x00"
_STORE_VERSION = 1


class EnrollmentStore:
    """speaker id -> enrolled embeddings, bound to one model checkpoint hash.

    File layout (little-endian): magic, u32 version, u32 embedding_dim,
    u16 hash length + ASCII hash, u32 speaker count, then per speaker
    u32 id length + UTF-8 id, u32 count, count x dim float32.
    """

    def __init__(self, checkpoint_hash: str, embedding_dim: int = 2048):
        self.checkpoint_hash = checkpoint_hash
        self.embedding_dim = embedding_dim
        self._data: dict[str, list[np.ndarray]] = {}
        self._lock = threading.Lock()

    def __contains__(self, speaker_id) -> bool:
        return speaker_id in self._data

    def speakers(self) -> list[str]:
        return sorted(self._data)

    def embeddings(self, speaker_id: str) -> list[np.ndarray]:
        with self._lock:
            if speaker_id not in self._data:
                raise UnknownSpeaker(speaker_id)
            return list(self._data[speaker_id])

    def add(self, speaker_id: str, embedding, checkpoint_hash: str) -> None:
        if checkpoint_hash != self.checkpoint_hash:
            raise HashMismatch("embedding comes from a different model checkpoint")
        e = np.asarray(embedding, dtype=np.float32).ravel()
        if len(e) != self.embedding_dim or not np.all(np.isfinite(e)):
            raise ValueError(f"embedding must be {self.embedding_dim} finite values")
        with self._lock:
            self._data.setdefault(speaker_id, []).append(e.copy())

    def to_bytes(self) -> bytes:
        h = self.checkpoint_hash.encode("ascii")
        with self._lock:
            items = sorted(self._data.items())
        parts = [_STORE_MAGIC, struct.pack("<II", _STORE_VERSION, self.embedding_dim),
                 struct.pack("<H", len(h)), h, struct.pack("<I", len(items))]
        for spk, embs in items:
            sb = spk.encode("utf-8")
            parts += [struct.pack("<I", len(sb)), sb, struct.pack("<I", len(embs))]
            parts += [e.astype("<f4").tobytes() for e in embs]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EnrollmentStore":
        if data[:8] != _STORE_MAGIC:
            raise ValueError("not an enrollment store")
        version, dim = struct.unpack_from("<II", data, 8)
        if version != _STORE_VERSION:
            raise ValueError(f"store version {version} unsupported")
        pos = 16
        (hl,) = struct.unpack_from("<H", data, pos)
        pos += 2
        store = cls(data[pos : pos + hl].decode("ascii"), dim)
        pos += hl
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        for _ in range(n):
            (sl,) = struct.unpack_from("<I", data, pos)
            pos += 4
            spk = data[pos : pos + sl].decode("utf-8")
            pos += sl
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            arr = np.frombuffer(data, dtype="<f4", count=count * dim, offset=pos).reshape(count, dim)
            pos += 4 * count * dim
            store._data[spk] = [row.astype(np.float32) for row in arr]
        return store

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "EnrollmentStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class Verifier:
    """Holds the model plus the fixed front-end settings used by enroll/verify."""

    model: TwoStreamModel
    align: AlignConfig = field(default_factory=AlignConfig)
    liveness: LivenessConfig = field(default_factory=LivenessConfig)
    silence: SilenceParams | None = None
    max_windows: int | None = None

    def __post_init__(self):
        self.model_hash = model_hash(self.model)

    def clean(self, buffer: AudioBuffer) -> AudioBuffer:
        return remove_silence(buffer, self.silence)

    def gate(self, clean: AudioBuffer) -> LivenessReport:
        return report_from_spectrogram(stft(clean), self.liveness)

    def embed(self, clean: AudioBuffer, speaker_id: str | None = None) -> SpeakerEmbedding:
        return utterance_embedding(clean, self.model, self.align, self.max_windows, speaker_id)

    def enroll(self, speaker_id: str, utterances: list[AudioBuffer], store: EnrollmentStore) -> int:
        """Gate every utterance first; append one embedding per utterance only if all pass."""
        if store.checkpoint_hash != self.model_hash:
            raise HashMismatch("store was built with a different model checkpoint")
        cleaned = [self.clean(u) for u in utterances]
        for i, c in enumerate(cleaned):
            rep = self.gate(c)
            if rep.verdict is not Verdict.LIVE:
                raise LivenessRejected(f"utterance {i} failed the liveness gate (r1={rep.r1:.4g}, r2={rep.r2:.4g})")
        embs = [self.embed(c, speaker_id) for c in cleaned]
        for e in embs:
            store.add(speaker_id, e.values, self.model_hash)
        return len(embs)

    def verify(self, utterance: AudioBuffer, speaker_id: str, store: EnrollmentStore, gamma: float) -> VerifyDecision:
        enrolled = store.embeddings(speaker_id)
        if store.checkpoint_hash != self.model_hash:
            raise HashMismatch("store was built with a different model checkpoint")
        clean = self.clean(utterance)
        rep = self.gate(clean)
        if rep.verdict is not Verdict.LIVE:
            raise SpoofDetected(rep)
        emb = self.embed(clean)
        return decide(mean_cosine(enrolled, emb.values), gamma)


def enroll(speaker_id, utterances, model, store, **kw) -> int:
    return Verifier(model, **kw).enroll(speaker_id, utterances, store)


def verify(utterance, speaker_id, store, model, gamma, **kw) -> VerifyDecision:
    return Verifier(model, **kw).verify(utterance, speaker_id, store, gamma)


def training_windows(buffers: list[AudioBuffer], labels: list[int], cfg: AlignConfig = AlignConfig(),
                     windows_per_utterance: int = 4) -> Batch:
    """Aligned training pairs from silence-removed utterances, evenly spaced within each."""
    lows, highs, ys = [], [], []
    for buf, y in zip(buffers, labels):
        low, high = window_inputs(extract_streams(buf), cfg, windows_per_utterance)
        lows.append(low)
        highs.append(high)
        ys += [y] * len(low)
    return Batch(np.concatenate(lows), np.concatenate(highs), np.asarray(ys, dtype=np.int64))
