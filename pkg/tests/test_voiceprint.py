import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultravoice.spectrum import FrameSet, Spectrogram, stft
from ultravoice.synth import gen_genuine, make_profile
from ultravoice.voiceprint import (
    EmptyFrameSet,
    LtaVector,
    MismatchedBands,
    lta,
    utterance_lta,
    voiceprint,
    within_between_variance,
)


def _spec(values):
    return Spectrogram(np.asarray(values, dtype=float), 192000, 2048, 512)


def test_constant_spectrogram():
    v = lta(_spec(np.full((5, 4), -33.0)), FrameSet(np.array([0, 2, 3]), 4))
    assert np.all(v.values == -33.0) and v.frames_used == 3


def test_two_by_two_hand_mean():
    # rows are bins, columns frames: bin 0 = [-10, -20], bin 1 = [-30, -40]
    v = lta(_spec([[-10, -20], [-30, -40]]), FrameSet(np.array([0, 1]), 2))
    assert v.values.tolist() == [-15.0, -35.0]


def test_single_frame_is_that_column():
    s = np.random.default_rng(0).standard_normal((6, 5))
    v = lta(_spec(s), FrameSet(np.array([3]), 5))
    assert np.array_equal(v.values, s[:, 3])


def test_empty_frames():
    with pytest.raises(EmptyFrameSet):
        lta(_spec(np.zeros((2, 2))), FrameSet(np.array([], int), 2))


def _lv(vals, band=(0.0, 1.0)):
    return LtaVector(np.asarray(vals, float), band, 1)


def test_voiceprint_mean():
    assert voiceprint([_lv([1, 2]), _lv([3, 4])]).values.tolist() == [2.0, 3.0]


def test_voiceprint_single_and_identical():
    assert voiceprint([_lv([5, 6])]).values.tolist() == [5.0, 6.0]
    p = voiceprint([_lv([1, -1])] * 3)
    assert p.values.tolist() == [1.0, -1.0] and p.sentence_count == 3


def test_mismatched_bands():
    with pytest.raises(MismatchedBands):
        voiceprint([_lv([1, 2]), _lv([1, 2], band=(0.0, 2.0))])
    with pytest.raises(MismatchedBands):
        voiceprint([_lv([1, 2]), _lv([1, 2, 3])])


def test_empty_list():
    with pytest.raises(ValueError):
        voiceprint([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(-90, 0), min_size=3, max_size=3), min_size=1, max_size=6), st.randoms())
def test_voiceprint_permutation_invariant(rows, rnd):
    ltas = [_lv(r) for r in rows]
    shuffled = list(ltas)
    rnd.shuffle(shuffled)
    assert np.allclose(voiceprint(ltas).values, voiceprint(shuffled).values)


def test_utterance_lta_band():
    x = gen_genuine(make_profile(0, 1), 0.5, seed=1)
    v = utterance_lta(stft(x))
    assert len(v.values) == 341  # bins 171..511: 16 kHz <= f < 48 kHz
    assert v.frames_used == 100


def test_within_speaker_variance_below_between():
    by_spk = {}
    for s in range(4):
        prof = make_profile(s, 11)
        by_spk[s] = [utterance_lta(stft(gen_genuine(prof, 2.0, seed=100 * s + u))) for u in range(4)]
    within, between = within_between_variance(by_spk)
    assert within < between
