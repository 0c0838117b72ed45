"""Two-stream speaker-embedding network.

Low stream: raw 16 kHz windows -> sinc filter bank -> two 1-D convolutions.
High stream: dB spectrogram crops -> F-filters (9x1), T-filters (1x9),
square 5x5 filters with growing dilation -> grid average pool -> fixed
projection. Both are concatenated and mapped by one dense layer to the
speaker embedding; a training-only dense head maps embeddings to classes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..rng import SplitMix64, hash_words
from .layers import (
    AdaptiveAvgPool2d,
    Conv1d,
    Conv2d,
    Flatten,
    LayerNorm,
    LeakyReLU,
    Linear,
    MaxPool1d,
    RMSNorm,
    Sequential,
    SincConv1d,
    softmax,
    softmax_cross_entropy,
)


class ShapeMismatch(ValueError):
    pass


class WindowLengthMismatch(ShapeMismatch):
    pass


@dataclass(frozen=True)
class ModelConfig:
    # low-frequency stream
    window_samples: int = 3200
    sample_rate: int = 16000
    sinc_filters: int = 80
    sinc_length: int = 251
    conv1_filters: tuple[int, ...] = (60, 60)
    conv1_kernel: int = 5
    pool: int = 3
    # high-frequency stream
    hf_bins: int = 426
    hf_frames: int = 75
    f_filters: int = 64
    f_kernel: int = 9
    f_dilations: tuple[int, ...] = (1, 2)
    t_filters: int = 64
    t_kernel: int = 9
    t_dilations: tuple[int, ...] = (1, 2)
    ft_filters: int = 48
    ft_kernel: int = 5
    ft_dilations: tuple[int, ...] = (2, 4, 8, 16)
    pool_grid: tuple[int, int] = (4, 4)
    hf_dim: int = 512
    # fusion and head
    embedding_dim: int = 2048
    n_classes: int = 0
    leaky_slope: float = 0.2
    dtype: str = "float32"
    seed: int = 0

    @property
    def low_dim(self) -> int:
        n = self.window_samples - self.sinc_length + 1
        n //= self.pool
        for _ in self.conv1_filters:
            n = (n - self.conv1_kernel + 1) // self.pool
        return self.conv1_filters[-1] * n

    @property
    def fused_dim(self) -> int:
        return self.low_dim + self.hf_dim

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        """A small configuration for fast unit tests; same topology."""
        base = dict(window_samples=400, sinc_filters=6, sinc_length=31, conv1_filters=(4, 4),
                    hf_bins=20, hf_frames=12, f_filters=3, t_filters=3, ft_filters=3,
                    ft_dilations=(1, 2, 2, 1), pool_grid=(2, 2), hf_dim=5, embedding_dim=7)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


def build_cnn1(cfg: ModelConfig, rng: SplitMix64) -> Sequential:
    dt = np.dtype(cfg.dtype)
    layers = [
        SincConv1d(cfg.sinc_filters, cfg.sinc_length, cfg.sample_rate,
                   init_range=(30.0, cfg.sample_rate / 2), dtype=dt),
        LayerNorm(cfg.sinc_filters, dtype=dt), LeakyReLU(cfg.leaky_slope), MaxPool1d(cfg.pool),
    ]
    c_in = cfg.sinc_filters
    for c_out in cfg.conv1_filters:
        layers += [Conv1d(c_in, c_out, cfg.conv1_kernel, rng, dt), LayerNorm(c_out, dtype=dt),
                   LeakyReLU(cfg.leaky_slope), MaxPool1d(cfg.pool)]
        c_in = c_out
    layers.append(Flatten())
    return Sequential(*layers)


def build_cnn2(cfg: ModelConfig, rng: SplitMix64) -> Sequential:
    dt = np.dtype(cfg.dtype)
    specs = []
    c_in = 1
    for d in cfg.f_dilations:
        specs.append((c_in, cfg.f_filters, (cfg.f_kernel, 1), (d, 1)))
        c_in = cfg.f_filters
    for d in cfg.t_dilations:
        specs.append((c_in, cfg.t_filters, (1, cfg.t_kernel), (1, d)))
        c_in = cfg.t_filters
    for d in cfg.ft_dilations:
        specs.append((c_in, cfg.ft_filters, (cfg.ft_kernel, cfg.ft_kernel), (d, d)))
        c_in = cfg.ft_filters
    layers = []
    for ci, co, k, d in specs:
        layers += [Conv2d(ci, co, k, d, rng, dt), LayerNorm(co, dtype=dt), LeakyReLU(cfg.leaky_slope)]
    pooled = cfg.ft_filters * cfg.pool_grid[0] * cfg.pool_grid[1]
    layers += [AdaptiveAvgPool2d(cfg.pool_grid), Flatten(),
               Linear(pooled, cfg.hf_dim, rng, dt, trainable=False)]
    return Sequential(*layers)


def build_head(cfg: ModelConfig, rng: SplitMix64) -> Sequential:
    """Training-only classifier on the embedding's direction.

    The embedding is RMS-normalized before the activation and dense layer.
    Without it, early RMSprop steps on the wide fusion layer shift raw
    embeddings by tens of units and the logits run away. The normalization
    does not center, so the loss stays sensitive to any offset shared by all
    speakers, which cosine scoring would otherwise be dominated by.
    """
    dt = np.dtype(cfg.dtype)
    return Sequential(RMSNorm(), LeakyReLU(cfg.leaky_slope),
                      Linear(cfg.embedding_dim, cfg.n_classes, rng, dt), check_finite=False)


class TwoStreamModel:
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        self.cfg = cfg
        rng = SplitMix64(hash_words(cfg.seed, 0xC0FFEE))
        self.cnn1 = build_cnn1(cfg, rng.split())
        self.cnn2 = build_cnn2(cfg, rng.split())
        self.fusion = Linear(cfg.fused_dim, cfg.embedding_dim, rng.split(), np.dtype(cfg.dtype))
        self.head = build_head(cfg, rng.split()) if cfg.n_classes > 0 else None

    # -- parameter access -------------------------------------------------------

    def modules(self, include_head: bool = True):
        yield "cnn1", self.cnn1
        yield "cnn2", self.cnn2
        yield "fusion", self.fusion
        if include_head and self.head is not None:
            yield "head", self.head

    def named_layers(self, include_head: bool = True):
        for name, mod in self.modules(include_head):
            if isinstance(mod, Sequential):
                for sub, layer in mod.named_layers(f"{name}."):
                    yield sub, layer
            else:
                yield name, mod

    def state_dict(self, include_head: bool = True) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.named_layers(include_head):
            for k, v in layer.params.items():
                out[f"{name}.{k}"] = v
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True):
        own = self.state_dict()
        missing = [k for k in own if k not in state and not (k.startswith("head.") and not strict)]
        unexpected = [k for k in state if k not in own]
        if (strict and missing) or unexpected:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, layer in self.named_layers():
            for k in layer.params:
                key = f"{name}.{k}"
                if key in state:
                    v = np.asarray(state[key])
                    if v.shape != layer.params[k].shape:
                        raise ShapeMismatch(f"{key}: {v.shape} != {layer.params[k].shape}")
                    layer.params[k] = v.astype(layer.params[k].dtype, copy=True)

    def trainable_layers(self):
        return [(n, l) for n, l in self.named_layers() if l.trainable and l.params]

    def zero_grad(self):
        for _, layer in self.named_layers():
            layer.grads = {}

    # -- forward / backward -----------------------------------------------------

    def _check(self, low, high):
        cfg = self.cfg
        if low.ndim != 2 or low.shape[1] != cfg.window_samples:
            raise WindowLengthMismatch(f"low-stream input {low.shape}, expected (B, {cfg.window_samples})")
        if high.shape[1:] != (1, cfg.hf_bins, cfg.hf_frames):
            raise ShapeMismatch(f"high-stream input {high.shape}, expected (B, 1, {cfg.hf_bins}, {cfg.hf_frames})")
        if low.shape[0] != high.shape[0]:
            raise ShapeMismatch("streams disagree on batch size")

    def cnn1_forward(self, low):
        return self.cnn1.forward(np.asarray(low, dtype=self.cfg.dtype))

    def cnn2_forward(self, high):
        return self.cnn2.forward(np.asarray(high, dtype=self.cfg.dtype))

    def fuse(self, lfeat, hfeat):
        if lfeat.shape[1] != self.cfg.low_dim or hfeat.shape[1] != self.cfg.hf_dim:
            raise ShapeMismatch(f"features {lfeat.shape}/{hfeat.shape}")
        return self.fusion.forward(np.concatenate([lfeat, hfeat], axis=1))

    def embed(self, low, high):
        low = np.asarray(low, dtype=self.cfg.dtype)
        high = np.asarray(high, dtype=self.cfg.dtype)
        if high.ndim == 3:
            high = high[:, None]
        self._check(low, high)
        return self.fuse(self.cnn1_forward(low), self.cnn2_forward(high))

    def logits(self, low, high):
        if self.head is None:
            raise RuntimeError("model has no classification head")
        return self.head.forward(self.embed(low, high))

    def predict(self, low, high):
        return softmax(self.logits(low, high)).argmax(axis=1)

    def loss_and_backward(self, low, high, labels) -> tuple[float, np.ndarray]:
        """Cross-entropy of the head's softmax; fills every layer's ``grads``. Returns (loss, logits)."""
        self.zero_grad()
        z = self.logits(low, high)
        loss, dz = softmax_cross_entropy(z, np.asarray(labels))
        de = self.head.backward(dz.astype(z.dtype))
        dfused = self.fusion.backward(de)
        d = self.cfg.low_dim
        self.cnn2.backward(np.ascontiguousarray(dfused[:, d:]))
        self.cnn1.backward(np.ascontiguousarray(dfused[:, :d]))
        return loss, z
