"""Speaker-classification training loop for the two-stream model."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..rng import SplitMix64
from .model import TwoStreamModel
from .optim import RMSprop

log = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class Batch:
    low: np.ndarray  # (B, window_samples)
    high: np.ndarray  # (B, 1, hf_bins, hf_frames)
    labels: np.ndarray  # (B,)

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Batch":
        return Batch(self.low[idx], self.high[idx], self.labels[idx])


def _absmax(a) -> float:
    a = np.abs(np.asarray(a, dtype=np.float64))
    finite = a[np.isfinite(a)]
    return float(finite.max()) if finite.size else float("nan")


def _grad_report(model: TwoStreamModel) -> str:
    """One line per parameter: largest finite |value| and |gradient|, and whether each is all-finite."""
    lines = []
    for name, layer in model.trainable_layers():
        for k, p in layer.params.items():
            g = layer.grads.get(k)
            gmax = _absmax(g) if g is not None else float("nan")
            lines.append(f"{name}.{k}: |p|max={_absmax(p):.3g} |g|max={gmax:.3g} "
                         f"finite={bool(np.all(np.isfinite(p)))}/{bool(g is None or np.all(np.isfinite(g)))}")
    return "\n".join(lines)


def train_step(batch: Batch, model: TwoStreamModel, opt: RMSprop) -> tuple[float, float]:
    """One forward/backward pass and RMSprop update. Returns (loss, batch accuracy).

    Raises NonFiniteLoss, with per-parameter diagnostics, before touching the
    parameters if the loss or any gradient is not finite.
    """
    labels = np.asarray(batch.labels, dtype=np.int64)
    if model.head is None:
        raise RuntimeError("training requires a model built with n_classes > 0")
    if labels.min() < 0 or labels.max() >= model.cfg.n_classes:
        raise ValueError("labels outside [0, n_classes)")
    loss, logits = model.loss_and_backward(batch.low, batch.high, labels)
    finite = np.isfinite(loss) and all(
        np.all(np.isfinite(g)) for _, layer in model.trainable_layers() for g in layer.grads.values())
    if not finite:
        raise NonFiniteLoss(f"non-finite loss {loss}\n{_grad_report(model)}")
    opt.step(model)
    acc = float(np.mean(logits.argmax(axis=1) == labels))
    return loss, acc


def fit(model: TwoStreamModel, data: Batch, opt: RMSprop, epochs: int, batch_size: int | None = None,
        seed: int = 0, on_epoch=None) -> list[float]:
    """Shuffled mini-batch training; the shuffle stream is derived from ``seed``."""
    rng = SplitMix64(seed)
    bs = batch_size or opt.batch_size
    losses = []
    for epoch in range(epochs):
        order = np.argsort(rng.uniform(len(data)), kind="stable")
        ep_loss, ep_acc, n = 0.0, 0.0, 0
        for start in range(0, len(order), bs):
            idx = order[start : start + bs]
            loss, acc = train_step(data.subset(idx), model, opt)
            ep_loss += loss * len(idx)
            ep_acc += acc * len(idx)
            n += len(idx)
        losses.append(ep_loss / n)
        log.info("epoch %d loss %.4f acc %.3f", epoch + 1, ep_loss / n, ep_acc / n)
        if on_epoch is not None:
            on_epoch(epoch, ep_loss / n, ep_acc / n)
    return losses
