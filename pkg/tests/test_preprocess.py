import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ultravoice.audio_io import AudioBuffer
from ultravoice.preprocess import (
    EmptyInput,
    NonIntegerDecimation,
    ResampleSpec,
    SilenceParams,
    downsample,
    kaiser_lowpass,
    remove_silence,
    retained_frames,
)
from ultravoice.synth import gen_genuine, make_profile


def oracle_keep(powers, theta_ratio, c):
    """Literal transcription of the counter rule, kept independent of the package."""
    theta = min(powers) + (max(powers) - min(powers)) * theta_ratio
    out, f = [], 0
    for p in powers:
        f = 0 if p > theta else f + 1
        out.append(f <= c)
    return out


# -- silence removal ------------------------------------------------------------


def test_all_zero_keeps_first_25_frames():
    k = 10
    buf = AudioBuffer(np.zeros(100 * k), 16000)
    out = remove_silence(buf, SilenceParams(frame_len=k, theta_ratio=0.25, tolerance_c=25))
    assert len(out) == 25 * k


def test_loud_then_silent_keeps_75_frames():
    k = 8
    x = np.concatenate([np.ones(50 * k), np.zeros(100 * k)])
    out = remove_silence(AudioBuffer(x, 16000), SilenceParams(frame_len=k, theta_ratio=0.25, tolerance_c=25))
    assert len(out) == 75 * k
    assert np.all(np.asarray(out.samples)[: 50 * k] == 1.0)
    assert np.all(np.asarray(out.samples)[50 * k :] == 0.0)


def test_short_input_unchanged():
    x = np.linspace(-0.5, 0.5, 7)
    buf = AudioBuffer(x, 16000)
    assert remove_silence(buf, SilenceParams(frame_len=8)) is buf


def test_empty_input_errors():
    with pytest.raises(EmptyInput):
        remove_silence(AudioBuffer(np.zeros(0), 16000), SilenceParams(frame_len=4))


def test_constant_nonzero_power_is_kept_whole():
    x = np.full(1000, 0.3)
    assert len(remove_silence(AudioBuffer(x, 16000), SilenceParams(frame_len=10))) == 1000


def test_trailing_partial_frame_retained():
    k = 10
    x = np.concatenate([np.ones(30 * k), np.zeros(40 * k), np.full(3, 0.7)])
    out = np.asarray(remove_silence(AudioBuffer(x, 16000), SilenceParams(k, 0.25, 5)).samples)
    assert len(out) == 35 * k + 3
    assert np.all(out[-3:] == 0.7)


def test_default_frame_length_is_50ms():
    assert SilenceParams.for_rate(16000).frame_len == 800
    assert SilenceParams.for_rate(192000).frame_len == 9600


@pytest.mark.parametrize("kw", [dict(frame_len=0), dict(frame_len=4, theta_ratio=1.0),
                                dict(frame_len=4, tolerance_c=-1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        SilenceParams(**kw)


@settings(max_examples=200, deadline=None)
@given(powers=st.lists(st.sampled_from([0.0, 0.01, 0.2, 1.0, 3.0]), min_size=1, max_size=120),
       c=st.integers(0, 30), ratio=st.sampled_from([0.1, 0.25, 0.5, 0.9]))
def test_keep_mask_matches_oracle(powers, c, ratio):
    got = retained_frames(np.array(powers), ratio, c)
    if max(powers) == min(powers) and max(powers) > 0:
        assert got.all()
    else:
        assert got.tolist() == oracle_keep(powers, ratio, c)


@settings(max_examples=60, deadline=None)
@given(x=arrays(np.float64, st.integers(1, 400), elements=st.floats(-1, 1)), k=st.integers(1, 20))
def test_output_never_longer_and_order_preserved(x, k):
    out = np.asarray(remove_silence(AudioBuffer(x, 16000), SilenceParams(k, 0.25, 2)).samples)
    assert len(out) <= len(x)
    # retained output is a subsequence of whole frames plus the tail, so it appears in order
    frames = {tuple(x[i : i + k]) for i in range(0, len(x) - len(x) % k, k)}
    body = out[: len(out) - len(x) % k]
    for i in range(0, len(body), k):
        assert tuple(body[i : i + k]) in frames


def test_idempotent_on_synthetic_speech():
    buf = gen_genuine(make_profile(2, 5), 1.0, seed=4)
    quiet = np.zeros(2 * 192000)  # 40 silent frames; the copy after it opens with one more
    raw = AudioBuffer(np.concatenate([np.asarray(buf.samples), quiet, np.asarray(buf.samples)]), 192000)
    once = remove_silence(raw)
    twice = remove_silence(once)
    assert len(raw) - len(once) == 16 * 9600
    k = 9600
    p1 = np.mean(np.asarray(once.samples)[: len(twice) // k * k].reshape(-1, k) ** 2, axis=1)
    p2 = np.mean(np.asarray(twice.samples)[: len(twice) // k * k].reshape(-1, k) ** 2, axis=1)
    assert np.array_equal(p1, p2)


# -- downsampling -----------------------------------------------------------------


def _tone(f, n=192000, rate=192000, phase=0.0):
    return AudioBuffer(np.sin(2 * np.pi * f * np.arange(n) / rate + phase), rate)


def _dft_amplitudes(y, rate):
    amp = np.abs(np.fft.rfft(y)) * 2 / len(y)
    return np.fft.rfftfreq(len(y), 1 / rate), amp


def test_1khz_tone_survives():
    y = np.asarray(downsample(_tone(1000)).samples)
    f, amp = _dft_amplitudes(y, 16000)
    assert f[amp.argmax()] == 1000
    assert abs(amp.max() - 1.0) < 0.01


def test_dc_passes():
    y = np.asarray(downsample(AudioBuffer(np.full(5000, 0.37), 192000)).samples)
    assert np.max(np.abs(y - 0.37)) < 1e-3


@pytest.mark.parametrize("phase", [0.0, 0.7, 1.5])
def test_30khz_tone_suppressed(phase):
    y = np.asarray(downsample(_tone(30000, phase=phase)).samples)
    _, amp = _dft_amplitudes(y, 16000)
    # every output spectral line sits 60 dB below the unit-amplitude input tone
    assert 20 * np.log10(amp.max()) < -60
    # steady-state interior (away from the filter's edge transients)
    interior = y[20:-20]
    assert 10 * np.log10(np.mean(interior**2) / 0.5) < -60


def test_filter_stopband_response():
    h = kaiser_lowpass(7200, 192000, 255, 80)
    w = np.exp(-2j * np.pi * np.arange(len(h)) * 30000 / 192000)
    assert 20 * np.log10(abs(h @ w)) < -80
    assert abs(h.sum() - 1) < 1e-12


@pytest.mark.parametrize("n", [1, 11, 12, 13, 1000, 4097])
def test_output_length_is_ceil(n):
    y = downsample(AudioBuffer(np.ones(n), 192000))
    assert len(y) == math.ceil(n / 12) and y.sample_rate == 16000


def test_factor_one_is_plain_lowpass():
    x = _tone(3000, 3000, 16000)
    y = downsample(x, ResampleSpec(16000, 16000))
    assert len(y) == len(x)
    # a 3 kHz tone is well inside the 7.2 kHz passband
    assert np.max(np.abs(np.asarray(y.samples)[300:-300] - np.asarray(x.samples)[300:-300])) < 1e-3


def test_non_integer_decimation():
    with pytest.raises(NonIntegerDecimation):
        downsample(AudioBuffer(np.ones(100), 44100), ResampleSpec(44100, 16000))


def test_even_taps_rejected():
    with pytest.raises(ValueError):
        ResampleSpec(filter_taps=256)
