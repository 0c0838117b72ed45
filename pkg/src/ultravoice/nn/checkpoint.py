"""Versioned, self-describing parameter container.

Layout (all integers little-endian)::

    magic    8 bytes  b"UVCKPT\\0\\0"
    version  u32
    config   u32 length + UTF-8 JSON of the ModelConfig
    count    u32
    count x  { u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims, float32 LE data }
    crc32    u32 over everything before it
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib

import numpy as np

from .model import ModelConfig, TwoStreamModel

MAGIC = b"UVCKPT\x00\x00"
VERSION = 1


class VersionMismatch(ValueError):
    pass


class CorruptFile(ValueError):
    pass


def checkpoint_bytes(model: TwoStreamModel, include_head: bool = False) -> bytes:
    cfg = model.cfg.to_dict()
    if not include_head:
        cfg["n_classes"] = 0
    cfg_json = json.dumps(cfg, sort_keys=True).encode("utf-8")
    state = model.state_dict(include_head=include_head)
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg_json)), cfg_json,
             struct.pack("<I", len(state))]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        nb = name.encode("utf-8")
        parts += [struct.pack("<H", len(nb)), nb, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(model: TwoStreamModel, path, include_head: bool = False) -> str:
    """Write the model; returns the SHA-256 of the file contents."""
    data = checkpoint_bytes(model, include_head)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def parse_checkpoint(data: bytes) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CorruptFile("not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptFile("checksum mismatch (truncated or damaged file)")
    try:
        pos = 12
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        cfg = ModelConfig.from_dict(json.loads(data[pos : pos + n].decode("utf-8")))
        pos += n
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        state = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + ln].decode("utf-8")
            pos += ln
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            state[name] = arr.astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CorruptFile(str(exc)) from exc
    if pos != len(body):
        raise CorruptFile("trailing bytes after the last tensor")
    return cfg, state


def load_checkpoint(path) -> TwoStreamModel:
    with open(path, "rb") as fh:
        data = fh.read()
    cfg, state = parse_checkpoint(data)
    model = TwoStreamModel(cfg)
    model.load_state_dict(state)
    return model


def model_hash(model: TwoStreamModel) -> str:
    """Digest of the enrollment-relevant parameters (head excluded)."""
    return hashlib.sha256(checkpoint_bytes(model, include_head=False)).hexdigest()
