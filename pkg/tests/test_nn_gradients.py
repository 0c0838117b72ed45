import numpy as np
import pytest

from gradcheck import TOL, check_layer, rel_err
from ultravoice.nn.layers import (
    AdaptiveAvgPool2d,
    Conv1d,
    Conv2d,
    Flatten,
    LayerNorm,
    LeakyReLU,
    Linear,
    MaxPool1d,
    RMSNorm,
    SincConv1d,
    softmax_cross_entropy,
)
from ultravoice.nn.model import ModelConfig, TwoStreamModel
from ultravoice.rng import SplitMix64

SEEDS = range(5)
DTYPES = [np.float64, np.float32]


def _sinc(rng):
    layer = SincConv1d(n_filters=4, length=15, sample_rate=16000, init_range=(300.0, 6000.0))
    layer.needs_input_grad = True
    # keep band edges away from the |.|, min-band and Nyquist kinks
    layer.params["f1"] = rng.uniform(200, 3000, 4)
    layer.params["f2"] = layer.params["f1"] + rng.uniform(200, 2000, 4)
    return layer, rng.standard_normal((2, 40))


def _layernorm(rng):
    ln = LayerNorm(3)
    ln.params["gamma"] = rng.uniform(0.5, 1.5, 3)
    ln.params["beta"] = rng.standard_normal(3)
    return ln, rng.standard_normal((2, 3, 7))


def _layernorm2d(rng):
    ln = LayerNorm(2)
    ln.params["gamma"] = rng.uniform(0.5, 1.5, 2)
    return ln, rng.standard_normal((2, 2, 4, 3))


def _rmsnorm(rng):
    return RMSNorm(), rng.standard_normal((3, 2, 5))


def _leaky(rng):
    x = rng.standard_normal((3, 11))
    x[np.abs(x) < 1e-2] += 0.05  # stay clear of the kink
    return LeakyReLU(0.2), x


def _maxpool(rng):
    return MaxPool1d(3), rng.standard_normal((2, 3, 11))


def _avgpool(rng):
    return AdaptiveAvgPool2d((2, 3)), rng.standard_normal((2, 3, 5, 7))


def _flatten(rng):
    return Flatten(), rng.standard_normal((2, 3, 4))


def _linear(rng):
    return Linear(5, 3, SplitMix64(int(rng.integers(1 << 31)))), rng.standard_normal((4, 5))


def _linear_fixed(rng):
    return Linear(5, 3, SplitMix64(int(rng.integers(1 << 31))), trainable=False), rng.standard_normal((4, 5))


def _conv1d(rng):
    return Conv1d(2, 3, 3, SplitMix64(int(rng.integers(1 << 31)))), rng.standard_normal((2, 2, 9))


def _conv2d_f(rng):
    return Conv2d(2, 3, (3, 1), (2, 1), SplitMix64(int(rng.integers(1 << 31)))), rng.standard_normal((2, 2, 7, 4))


def _conv2d_t(rng):
    return Conv2d(1, 2, (1, 3), (1, 2), SplitMix64(int(rng.integers(1 << 31)))), rng.standard_normal((2, 1, 3, 8))


def _conv2d_ft(rng):
    return Conv2d(2, 2, (3, 3), (2, 3), SplitMix64(int(rng.integers(1 << 31)))), rng.standard_normal((1, 2, 6, 7))


CASES = {
    "sinc_conv": _sinc,
    "conv1d": _conv1d,
    "conv2d_freq_dilated": _conv2d_f,
    "conv2d_time_dilated": _conv2d_t,
    "conv2d_square_dilated": _conv2d_ft,
    "layernorm": _layernorm,
    "layernorm_2d": _layernorm2d,
    "rms_norm": _rmsnorm,
    "leaky_relu": _leaky,
    "maxpool": _maxpool,
    "adaptive_avgpool": _avgpool,
    "flatten": _flatten,
    "linear": _linear,
    "linear_fixed": _linear_fixed,
}


@pytest.mark.parametrize("dtype", DTYPES, ids=["f64", "f32"])
@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(CASES))
def test_layer_gradients(name, seed, dtype):
    rng = np.random.default_rng(1000 + seed)
    layer, x = CASES[name](rng)
    errs = check_layer(layer, x, dtype, rng)
    assert errs, "nothing was checked"
    for k, e in errs.items():
        assert e < TOL[dtype], f"{name}.{k}: {e:.2e}"


@pytest.mark.parametrize("dtype", DTYPES, ids=["f64", "f32"])
@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_cross_entropy_gradient(seed, dtype):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((4, 5)) * 3
    labels = rng.integers(0, 5, 4)
    _, g = softmax_cross_entropy(z.astype(dtype), labels)
    num = np.zeros_like(z)
    h = 1e-6
    for idx in np.ndindex(*z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        num[idx] = (softmax_cross_entropy(zp, labels)[0] - softmax_cross_entropy(zm, labels)[0]) / (2 * h)
    assert rel_err(g, num) < TOL[dtype]


def test_sinc_input_gradient_skipped_by_default():
    layer = SincConv1d(n_filters=2, length=9)
    layer.forward(np.zeros((1, 20), np.float32))
    assert layer.backward(np.ones((1, 2, 12), np.float32)) is None
    assert set(layer.grads) == {"f1", "f2"}


def test_fixed_linear_has_no_gradients():
    layer = Linear(4, 2, SplitMix64(1), trainable=False)
    layer.forward(np.ones((1, 4)))
    layer.backward(np.ones((1, 2)))
    assert layer.grads == {}
    assert np.all(layer.params["bias"] == 0)


def test_whole_model_gradient_float64():
    cfg = ModelConfig.tiny(n_classes=3, dtype="float64", seed=3)
    model = TwoStreamModel(cfg)
    # the top mel filter ends exactly at Nyquist, where the clamp is not differentiable
    sinc = model.cnn1.layers[0]
    sinc.params["f2"] = np.minimum(sinc.params["f2"], 0.99 * cfg.sample_rate / 2)
    rng = np.random.default_rng(0)
    low = rng.standard_normal((3, cfg.window_samples))
    high = rng.standard_normal((3, 1, cfg.hf_bins, cfg.hf_frames))
    labels = np.array([0, 1, 2])
    model.loss_and_backward(low, high, labels)
    for name, layer in model.trainable_layers():
        for k, p in layer.params.items():
            flat = p.reshape(-1)
            picks = rng.choice(flat.size, size=min(3, flat.size), replace=False)
            for i in picks:
                old = flat[i]
                h = 1e-6 * max(1.0, abs(old))
                flat[i] = old + h
                up = softmax_cross_entropy(model.logits(low, high), labels)[0]
                flat[i] = old - h
                down = softmax_cross_entropy(model.logits(low, high), labels)[0]
                flat[i] = old
                num = (up - down) / (2 * h)
                ana = layer.grads[k].reshape(-1)[i]
                assert abs(ana - num) <= 1e-6 * max(1.0, abs(num)) + 1e-9, f"{name}.{k}[{i}]"
