import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultravoice.metrics import EmptyClass, TrialSet, cer, det_points, eer, far_frr


def oracle_eer(genuine, impostor):
    """Brute force: every threshold gives an operating point; any two points can be
    mixed, so the EER is the lowest diagonal crossing over all point pairs."""
    thresholds = sorted(set(genuine) | set(impostor)) + [np.inf]
    pts = []
    for t in thresholds:
        far = sum(s >= t for s in impostor) / len(impostor)
        frr = sum(s < t for s in genuine) / len(genuine)
        pts.append((far, frr))
    best = 1.0
    for (a1, b1), (a2, b2) in itertools.combinations_with_replacement(pts, 2):
        d1, d2 = a1 - b1, a2 - b2
        if d1 == 0:
            best = min(best, a1)
        if d2 == 0:
            best = min(best, a2)
        if d1 * d2 < 0:
            w = d1 / (d1 - d2)
            best = min(best, a1 + w * (a2 - a1))
    return best


def test_far_frr_examples():
    t = TrialSet.from_groups([0.9, 0.8], [0.1, 0.2])
    assert far_frr(t, 0.5) == (0.0, 0.0)
    assert far_frr(t, 5.0) == (0.0, 1.0)
    assert far_frr(t, -5.0) == (1.0, 0.0)


def test_accept_is_inclusive():
    t = TrialSet.from_groups([0.5], [0.5])
    assert far_frr(t, 0.5) == (1.0, 0.0)


def test_empty_class():
    with pytest.raises(EmptyClass):
        far_frr(TrialSet.from_groups([0.1], []), 0.0)
    with pytest.raises(EmptyClass):
        eer(TrialSet.from_groups([], [0.3]))


def test_separable_eer_zero():
    rate, thr = eer(TrialSet.from_groups([0.9, 0.8, 0.7], [0.1, 0.2]))
    assert rate == 0.0
    assert far_frr(TrialSet.from_groups([0.9, 0.8, 0.7], [0.1, 0.2]), thr) == (0.0, 0.0)


def test_identical_lists_eer_half():
    s = [0.1, 0.4, 0.4, 0.7, 0.9]
    assert eer(TrialSet.from_groups(s, s))[0] == pytest.approx(0.5)


def test_hand_case():
    rate, thr = eer(TrialSet.from_groups([0.9, 0.4], [0.6, 0.1]))
    assert rate == 0.25
    assert 0.4 < thr <= 0.6


def test_identical_distributions_large():
    rng = np.random.default_rng(0)
    rate, _ = eer(TrialSet.from_groups(rng.standard_normal(5000), rng.standard_normal(5000)))
    assert abs(rate - 0.5) <= 0.02


def test_gaussian_shift_close_to_theory():
    # d' = 1: EER = Phi(-1/2) = 0.3085
    rng = np.random.default_rng(1)
    rate, _ = eer(TrialSet.from_groups(rng.standard_normal(20000) + 1, rng.standard_normal(20000)))
    assert abs(rate - 0.3085) < 0.01


scores = st.lists(st.integers(0, 12).map(lambda v: v / 4), min_size=1, max_size=12)


@settings(max_examples=300, deadline=None)
@given(g=scores, i=scores)
def test_eer_matches_brute_force(g, i):
    rate, thr = eer(TrialSet.from_groups(g, i))
    assert rate == pytest.approx(oracle_eer(g, i), abs=1e-12)
    assert 0.0 <= rate <= 1.0


@settings(max_examples=100, deadline=None)
@given(g=scores, i=scores)
def test_eer_rank_invariant(g, i):
    f = lambda v: np.exp(3 * np.asarray(v)) - 7
    assert eer(TrialSet.from_groups(f(g), f(i)))[0] == pytest.approx(eer(TrialSet.from_groups(g, i))[0])


@settings(max_examples=100, deadline=None)
@given(g=scores, i=scores)
def test_det_monotone(g, i):
    thr, far, frr = det_points(TrialSet.from_groups(g, i))
    assert np.all(np.diff(thr) > 0)
    assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)
    assert far[-1] == 0.0 and frr[-1] == 1.0


def test_balanced_random_scores_eer_at_most_half():
    rng = np.random.default_rng(5)
    rates = [eer(TrialSet.from_groups(rng.random(50), rng.random(50)))[0] for _ in range(200)]
    assert 0.4 < np.mean(rates) <= 0.5


@pytest.mark.parametrize("pred,truth,want", [([1, 0, 1], [1, 0, 1], 0.0), ([1, 1], [0, 0], 1.0),
                                             (["a", "b", "c", "d"], ["a", "b", "c", "x"], 0.25)])
def test_cer(pred, truth, want):
    assert cer(pred, truth) == want


def test_cer_errors():
    with pytest.raises(ValueError):
        cer([], [])
    with pytest.raises(ValueError):
        cer([1], [1, 2])
