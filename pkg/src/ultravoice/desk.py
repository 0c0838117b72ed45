"""Desk-scale speaker-verification experiment on the synthetic corpus.

Train the two-stream model as a speaker classifier on a few synthetic
speakers, then enroll and verify speakers it never saw.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import TrialSet, eer
from .nn.model import ModelConfig, TwoStreamModel
from .nn.optim import RMSprop
from .nn.train import Batch, fit, train_step
from .pipeline import AlignConfig, mean_cosine, training_windows, utterance_embedding
from .preprocess import remove_silence
from .synth import gen_genuine, make_profile

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeskConfig:
    n_speakers: int = 8
    n_train: int = 6
    train_utts: int = 8
    train_windows: int = 1
    heldout_utts: int = 8
    enroll_utts: int = 3
    # embeddings average this many evenly spaced windows; fewer than ~10 leaves
    # utterance embeddings dominated by which phonetic segments the windows hit
    eval_windows: int = 12
    duration: float = 1.0
    epochs: int = 4
    batch: int = 8
    lr: float = 0.001
    seed: int = 7


@dataclass
class DeskResult:
    eer: float
    threshold: float
    genuine: list[float] = field(repr=False)
    impostor: list[float] = field(repr=False)
    losses: list[float] = field(repr=False)
    seconds: float = 0.0

    @property
    def within_mean(self) -> float:
        return float(np.mean(self.genuine))

    @property
    def cross_mean(self) -> float:
        return float(np.mean(self.impostor))


def _utterance(cfg: DeskConfig, spk: int, u: int):
    prof = make_profile(spk, cfg.seed)
    return remove_silence(gen_genuine(prof, cfg.duration, seed=cfg.seed * 1000003 + spk * 1000 + u))


def train_set(cfg: DeskConfig) -> Batch:
    bufs, labels = [], []
    for spk in range(cfg.n_train):
        for u in range(cfg.train_utts):
            bufs.append(_utterance(cfg, spk, u))
            labels.append(spk)
    return training_windows(bufs, labels, AlignConfig(), cfg.train_windows)


def heldout_trials(cfg: DeskConfig, model: TwoStreamModel) -> tuple[list[float], list[float]]:
    """Each held-out speaker enrolls its first utterances; every remaining
    held-out utterance is scored against every enrolled speaker."""
    emb = {}
    for spk in range(cfg.n_train, cfg.n_speakers):
        emb[spk] = [utterance_embedding(_utterance(cfg, spk, 100 + u), model, max_windows=cfg.eval_windows).values
                    for u in range(cfg.heldout_utts)]
    genuine, impostor = [], []
    for claimed, es in emb.items():
        enrolled = es[: cfg.enroll_utts]
        for spk, tests in emb.items():
            for e in tests[cfg.enroll_utts :]:
                (genuine if spk == claimed else impostor).append(mean_cosine(enrolled, e))
    return genuine, impostor


def run(cfg: DeskConfig = DeskConfig(), on_epoch=None, trace: bool = False) -> tuple[DeskResult, TwoStreamModel]:
    """Train, then score held-out trials. With ``trace`` the held-out EER is also logged after every epoch."""
    t0 = time.perf_counter()
    model = TwoStreamModel(ModelConfig(n_classes=cfg.n_train, seed=cfg.seed))
    data = train_set(cfg)
    opt = RMSprop(lr=cfg.lr, batch_size=cfg.batch)

    def epoch_done(epoch, loss, acc):
        if trace:
            g, i = heldout_trials(cfg, model)
            log.info("epoch %d held-out eer %.4f within %.4f cross %.4f", epoch + 1,
                     eer(TrialSet.from_groups(g, i))[0], np.mean(g), np.mean(i))
        if on_epoch is not None:
            on_epoch(epoch, loss, acc)

    losses = fit(model, data, opt, cfg.epochs, cfg.batch, seed=cfg.seed, on_epoch=epoch_done)
    g, i = heldout_trials(cfg, model)
    rate, thr = eer(TrialSet.from_groups(g, i))
    return DeskResult(rate, thr, g, i, losses, time.perf_counter() - t0), model


@dataclass
class OverfitResult:
    steps: int  # steps taken until the batch was fully classified (or max_steps)
    reached: bool
    losses: list[float]
    accuracies: list[float]


def overfit_batch(n_speakers: int = 2, per_speaker: int = 4, max_steps: int = 200, duration: float = 0.5,
                  seed: int = 11, lr: float = 0.001, on_step=None) -> OverfitResult:
    """Repeat RMSprop steps on one fixed batch, one window per utterance, until every
    sample is classified correctly. Accuracy is measured after each update."""
    bufs, labels = [], []
    for spk in range(n_speakers):
        prof = make_profile(spk, seed)
        for u in range(per_speaker):
            bufs.append(remove_silence(gen_genuine(prof, duration, seed=seed * 7919 + spk * 100 + u)))
            labels.append(spk)
    batch = training_windows(bufs, labels, AlignConfig(), windows_per_utterance=1)
    model = TwoStreamModel(ModelConfig(n_classes=n_speakers, seed=seed))
    opt = RMSprop(lr=lr, batch_size=len(batch))
    losses, accs = [], []
    for step in range(1, max_steps + 1):
        loss, _ = train_step(batch, model, opt)
        acc = float(np.mean(model.predict(batch.low, batch.high) == batch.labels))
        losses.append(loss)
        accs.append(acc)
        if on_step is not None:
            on_step(step, loss, acc)
        if acc == 1.0:
            return OverfitResult(step, True, losses, accs)
    return OverfitResult(max_steps, False, losses, accs)
