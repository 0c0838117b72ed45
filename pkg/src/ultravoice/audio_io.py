"""Mono RIFF/WAVE reading and writing (PCM-16 and IEEE float-32)."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

PIPELINE_RATES = (16000, 48000, 96000, 192000, 256000)

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

PCM16_SCALE = 32768.0


class UnsupportedFormat(ValueError):
    """The file is a WAV file this reader refuses to decode (stereo, compressed, odd bit depth)."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray = field(repr=False)
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        samples = samples.view()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channel_count(self) -> int:
        return 1

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)


def _iter_chunks(data: bytes, start: int):
    pos = start
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield chunk_id, body
        pos += 8 + size + (size & 1)


def read_wav(path: str | os.PathLike) -> AudioBuffer:
    """Read a mono PCM-16 or float-32 WAV file.

    PCM-16 samples are divided by 32768 so -32768 maps to exactly -1.0.
    Raises FileNotFoundError for a missing path and UnsupportedFormat for
    anything else the pipeline cannot consume without conversion upstream.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormat(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for chunk_id, body in _iter_chunks(data, 12):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise UnsupportedFormat(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                # the real format tag is the first two bytes of the sub-format GUID
                sub_tag = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub_tag,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
    if fmt is None or payload is None:
        raise UnsupportedFormat(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, only mono is accepted")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        n = len(payload) // 2
        ints = np.frombuffer(payload, dtype="<i2", count=n)
        samples = ints.astype(np.float64) / PCM16_SCALE
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        n = len(payload) // 4
        samples = np.frombuffer(payload, dtype="<f4", count=n).astype(np.float32)
    else:
        raise UnsupportedFormat(f"{path}: format tag {tag} with {bits} bits is not supported")
    return AudioBuffer(samples, rate)


def write_wav(buffer: AudioBuffer, path: str | os.PathLike, encoding: str = "float32") -> None:
    """Write ``buffer`` as a mono WAV file.

    ``encoding`` is ``"float32"`` (bit-exact round trip for float32 data) or
    ``"pcm16"`` (samples clipped to [-1, 1) and rounded to the nearest quantum).
    """
    samples = np.asarray(buffer.samples)
    if encoding == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = samples.astype("<f4").tobytes()
    elif encoding == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        q = np.clip(np.round(samples.astype(np.float64) * PCM16_SCALE), -32768, 32767)
        payload = q.astype("<i2").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, 1, buffer.sample_rate, buffer.sample_rate * block_align, block_align, bits
    )
    chunks = [b"fmt ", struct.pack("<I", len(fmt)), fmt]
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        # non-PCM formats carry a fact chunk with the frame count
        chunks += [b"fact", struct.pack("<II", 4, len(samples))]
    chunks += [b"data", struct.pack("<I", len(payload)), payload]
    if len(payload) & 1:
        chunks.append(b"\x00")
    body = b"WAVE" + b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)
