"""FAR / FRR / EER / CER and DET points for verification trials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyClass(ValueError):
    pass


@dataclass(frozen=True)
class TrialSet:
    scores: np.ndarray
    labels: np.ndarray  # True for genuine (target) trials

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=bool)
        if s.shape != lab.shape or s.ndim != 1:
            raise ValueError("scores and labels must be parallel 1-D sequences")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_groups(cls, genuine, impostor) -> "TrialSet":
        g = np.asarray(genuine, dtype=np.float64)
        i = np.asarray(impostor, dtype=np.float64)
        return cls(np.concatenate([g, i]), np.concatenate([np.ones(len(g), bool), np.zeros(len(i), bool)]))

    def split(self):
        g, i = self.scores[self.labels], self.scores[~self.labels]
        if len(g) == 0 or len(i) == 0:
            raise EmptyClass("need at least one genuine and one impostor trial")
        return g, i


def far_frr(trials: TrialSet, threshold: float) -> tuple[float, float]:
    """Accept iff score >= threshold."""
    g, i = trials.split()
    return float(np.mean(i >= threshold)), float(np.mean(g < threshold))


def det_points(trials: TrialSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, far, frr) at every distinct score plus one point above the maximum."""
    g, i = trials.split()
    thr = np.unique(trials.scores)
    thr = np.append(thr, np.inf)
    gs, is_ = np.sort(g), np.sort(i)
    far = 1.0 - np.searchsorted(is_, thr, side="left") / len(is_)
    frr = np.searchsorted(gs, thr, side="left") / len(gs)
    return thr, far, frr


def _lower_hull(x: np.ndarray, y: np.ndarray) -> list[int]:
    """Indices of the lower convex hull of points already sorted by x (monotone chain)."""
    hull: list[int] = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            cross = (x[j] - x[i]) * (y[k] - y[i]) - (y[j] - y[i]) * (x[k] - x[i])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def eer(trials: TrialSet) -> tuple[float, float]:
    """Equal error rate and a threshold achieving it.

    Operating points are swept over the distinct scores. The lower convex hull
    of the (FAR, FRR) points is intersected with FAR = FRR by linear
    interpolation between the two hull vertices that straddle the diagonal.
    The threshold is interpolated across the gap between those vertices'
    threshold regions.
    """
    thr, far, frr = det_points(trials)
    # ascending FAR == descending threshold
    order = np.arange(len(thr))[::-1]
    hx, hy = far[order], frr[order]
    hull = [order[k] for k in _lower_hull(hx, hy)]
    diff = far[hull] - frr[hull]  # runs from <= 0 (strict thresholds) to >= 0
    for a, b, da, db in zip(hull[:-1], hull[1:], diff[:-1], diff[1:]):
        if da == 0:
            return float(far[a]), float(thr[a])
        if da < 0 < db:
            w = da / (da - db)
            rate = far[a] + w * (far[b] - far[a])
            # vertex a holds for thresholds in (thr[a-1], thr[a]], vertex b in (thr[b-1], thr[b]]
            threshold = thr[a - 1] + w * (thr[b] - thr[a - 1])
            return float(rate), float(threshold)
    last = hull[-1]
    return float(far[last]), float(thr[last])


def cer(predicted, truth) -> float:
    p, t = list(predicted), list(truth)
    if len(p) != len(t):
        raise ValueError("predicted and truth differ in length")
    if not p:
        raise ValueError("empty label lists")
    return sum(a != b for a, b in zip(p, t)) / len(p)
