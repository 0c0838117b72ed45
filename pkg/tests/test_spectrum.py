import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultravoice.audio_io import AudioBuffer
from ultravoice.spectrum import (
    DB_FLOOR,
    STFT_DEFAULT,
    EmptyBand,
    InputTooShort,
    Spectrogram,
    StftConfig,
    crop_band,
    load_spectrogram,
    save_spectrogram,
    stft,
    stft_magnitude,
    to_db,
    top_m_frames,
)


def dft_oracle(frame: np.ndarray, n_fft: int) -> np.ndarray:
    """Direct O(N^2) DFT of one frame, Hann-windowed, bins 0..n_fft/2-1."""
    n = len(frame)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    x = np.zeros(n_fft)
    x[:n] = frame * w
    k = np.arange(n_fft // 2)[:, None]
    t = np.arange(n_fft)[None, :]
    return np.abs((np.cos(2 * np.pi * k * t / n_fft) * x).sum(1) - 1j * (np.sin(2 * np.pi * k * t / n_fft) * x).sum(1))


def test_magnitudes_match_direct_dft():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4096) * 0.3
    mags = stft_magnitude(AudioBuffer(x, 192000))
    assert mags.shape == (1024, 5)
    for col in range(5):
        ref = dft_oracle(x[col * 512 : col * 512 + 2048], 2048)
        assert np.max(np.abs(mags[:, col] - ref)) / np.max(ref) < 1e-6


def test_frequency_resolution():
    spec = stft(AudioBuffer(np.ones(4096), 192000))
    assert spec.freq_resolution == 93.75
    assert spec.n_bins == 1024


def test_frame_count_formula():
    assert stft(AudioBuffer(np.ones(4096), 192000)).n_frames == 5
    assert STFT_DEFAULT.n_frames(2048) == 1


def test_all_zero_hits_floor():
    spec = stft(AudioBuffer(np.zeros(5000), 192000))
    assert np.all(spec.values == DB_FLOOR)


@pytest.mark.parametrize("k", [3, 107, 256, 900])
def test_bin_centred_sine_peaks_at_its_row(k):
    f = k * 93.75
    x = np.sin(2 * np.pi * f * np.arange(8192) / 192000)
    spec = stft(AudioBuffer(x, 192000))
    assert np.all(spec.values.argmax(axis=0) == k)


def test_too_short():
    with pytest.raises(InputTooShort):
        stft(AudioBuffer(np.zeros(2047), 192000))


def test_parseval_convention():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(2048)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(2048) / 2048)
    one_sided = stft_magnitude(AudioBuffer(x, 192000))[:, 0]
    nyquist = abs(np.sum(w * x * (-1.0) ** np.arange(2048)))
    total = one_sided[0] ** 2 + 2 * np.sum(one_sided[1:] ** 2) + nyquist**2
    energy = 2048 * np.sum((w * x) ** 2)
    assert abs(total - energy) / energy < 1e-6


def test_preliminary_preset():
    cfg = StftConfig.preliminary(192000)
    assert (cfg.win_len, cfg.hop) == (1920, 384)


# -- dB conversion -----------------------------------------------------------------


def test_to_db_rules():
    m = np.array([[10.0, 1.0, 0.0]])
    db = to_db(m, -100.0)
    assert db[0, 0] == 0.0
    assert db[0, 1] == pytest.approx(-20.0, abs=1e-12)
    assert db[0, 2] == -100.0


def test_to_db_all_zero():
    assert np.all(to_db(np.zeros((3, 4)), -80.0) == -80.0)


@settings(max_examples=50, deadline=None)
@given(gain=st.floats(1e-3, 1e3))
def test_db_is_gain_invariant(gain):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(6000) * 0.1
    a = stft(AudioBuffer(x, 192000)).values
    b = stft(AudioBuffer(x * gain, 192000)).values
    assert np.allclose(a, b, atol=1e-9)


# -- band cropping -----------------------------------------------------------------


def _spec(rows=1024, cols=3):
    return Spectrogram(np.arange(rows * cols, dtype=float).reshape(rows, cols), 192000, 2048, 512)


def test_crop_8_to_48khz():
    s = _spec()
    c = crop_band(s, 8000, 48000)
    assert c.n_bins == 426
    assert c.first_bin == 86
    assert np.array_equal(c.values, s.values[86:512])
    assert c.bin_frequencies()[0] >= 8000 and c.bin_frequencies()[-1] < 48000


def test_identity_crop():
    s = _spec()
    c = crop_band(s, 0, 96000)
    assert np.array_equal(c.values, s.values)


def test_degenerate_band():
    with pytest.raises(EmptyBand):
        crop_band(_spec(), 8000, 8000)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0, 90000), b=st.floats(0, 90000), c=st.floats(0, 90000), d=st.floats(0, 90000))
def test_nested_crops_compose(a, b, c, d):
    outer_lo, inner_lo, inner_hi, outer_hi = sorted([a, b, c, d])
    s = _spec(cols=1)
    try:
        direct = crop_band(s, inner_lo, inner_hi)
    except EmptyBand:
        return
    twice = crop_band(crop_band(s, outer_lo, outer_hi), inner_lo, inner_hi)
    assert twice.first_bin == direct.first_bin
    assert np.array_equal(twice.values, direct.values)


# -- top-M selection ----------------------------------------------------------------


def _toy(cols):
    return Spectrogram(np.asarray(cols, dtype=float).T, 192000, 2048, 512)


def test_top_m_two_frame_toy():
    v = np.full((2, 1024), -100.0)
    v[0, 214:] = 0.0
    v[1, 214:] = 0.0
    v[0, 300] = -40.0  # frame 0 sums to -40
    v[1, 300] = -10.0  # frame 1 sums to -10
    fs = top_m_frames(_toy(v), m=1, f_threshold=20000)
    assert fs.indices.tolist() == [1]


def test_top_m_tie_goes_to_lower_index():
    v = np.zeros((2, 1024))
    assert top_m_frames(_toy(v), m=1).indices.tolist() == [0]


def test_top_m_saturates():
    v = np.random.default_rng(0).standard_normal((7, 1024))
    fs = top_m_frames(_toy(v), m=100)
    assert fs.indices.tolist() == list(range(7))
    assert fs.source_frames_total == 7


def test_top_m_ignores_bins_below_threshold():
    v = np.zeros((3, 1024))
    v[2, :213] = 50.0  # bins below 20 kHz, ignored
    v[1, 213] = 1.0  # bin 213 = 19968.75 Hz, ignored
    v[0, 214] = 1.0  # bin 214 = 20062.5 Hz, counted
    assert top_m_frames(_toy(v), m=1).indices.tolist() == [0]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 12))
def test_top_m_properties(seed, m):
    v = np.random.default_rng(seed).integers(-5, 5, (10, 1024)).astype(float)
    fs = top_m_frames(_toy(v), m)
    idx = fs.indices
    assert len(idx) == min(m, 10)
    assert np.all(np.diff(idx) > 0)
    sums = v[:, 214:].sum(1)
    # no unselected frame beats a selected one; equal scores prefer lower indices
    rest = [i for i in range(10) if i not in idx]
    for j in rest:
        for i in idx:
            assert sums[j] < sums[i] or (sums[j] == sums[i] and j > i)
    assert np.array_equal(top_m_frames(_toy(v), m).indices, idx)


def test_export_round_trip(tmp_path):
    x = np.random.default_rng(1).standard_normal(9000)
    spec = crop_band(stft(AudioBuffer(x, 192000)), 8000, 48000)
    save_spectrogram(spec, tmp_path / "s.bin")
    back = load_spectrogram(tmp_path / "s.bin")
    assert back.values.shape == spec.values.shape
    assert np.array_equal(back.values, spec.values.astype(np.float32))
    assert (back.sample_rate, back.hop, back.n_fft, back.first_bin) == (192000, 512, 2048, 86)
