"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during ``forward`` and, in
``backward``, accumulates parameter gradients into ``self.grads`` and returns
the gradient with respect to its input. Batch is always the leading axis.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NonFiniteActivation(FloatingPointError):
    pass


class Layer:
    trainable = True

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _acc(self, name: str, g: np.ndarray):
        if name in self.grads:
            self.grads[name] += g
        else:
            self.grads[name] = g.astype(self.params[name].dtype, copy=True)

    def astype(self, dtype):
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
        self.grads = {}
        return self


def _uniform(rng, shape, bound, dtype):
    return (rng.uniform(int(np.prod(shape)), -bound, bound)).reshape(shape).astype(dtype)


# --- sinc band-pass front end -------------------------------------------------


def sinc_bandpass_kernels(f1: np.ndarray, f2: np.ndarray, length: int, sample_rate: float) -> np.ndarray:
    """Hamming-windowed difference of two ideal low-passes, shape (filters, length).

    No constraints are applied: ``f1 == f2`` gives an all-zero kernel.
    """
    m = np.arange(length) - (length - 1) / 2
    a = 2.0 / sample_rate
    lp2 = a * f2[:, None] * np.sinc(a * f2[:, None] * m)
    lp1 = a * f1[:, None] * np.sinc(a * f1[:, None] * m)
    return (lp2 - lp1) * np.hamming(length)


def mel_cutoffs(n_filters: int, low_hz: float, high_hz: float) -> tuple[np.ndarray, np.ndarray]:
    to_mel = lambda f: 2595 * np.log10(1 + f / 700.0)
    to_hz = lambda m: 700 * (10 ** (m / 2595) - 1)
    edges = to_hz(np.linspace(to_mel(low_hz), to_mel(high_hz), n_filters + 1))
    return edges[:-1], edges[1:]


class SincConv1d(Layer):
    """Learnable band-pass filter bank applied as a valid 1-D convolution.

    Parameters ``f1``/``f2`` are raw band edges in Hz, mapped before use to
    ``lo = |f1|``, ``band = max(|f2 - f1|, min_band)``, ``hi = min(lo + band, nyquist)``.
    Input (B, T) -> output (B, filters, T - length + 1).
    """

    def __init__(self, n_filters=80, length=251, sample_rate=16000, min_band=50.0,
                 init_range=(30.0, 8000.0), dtype=np.float32):
        super().__init__()
        self.length = length
        self.sample_rate = float(sample_rate)
        self.min_band = float(min_band)
        f1, f2 = mel_cutoffs(n_filters, *init_range)
        self.params = {"f1": f1.astype(dtype), "f2": f2.astype(dtype)}
        self.needs_input_grad = False

    def cutoffs(self):
        f1 = self.params["f1"].astype(np.float64)
        f2 = self.params["f2"].astype(np.float64)
        lo = np.abs(f1)
        raw_band = np.abs(f2 - f1)
        band = np.maximum(raw_band, self.min_band)
        hi = np.minimum(lo + band, self.sample_rate / 2)
        return lo, hi, raw_band, band

    def kernels(self) -> np.ndarray:
        lo, hi, _, _ = self.cutoffs()
        return sinc_bandpass_kernels(lo, hi, self.length, self.sample_rate)

    def forward(self, x):
        if x.ndim != 2:
            raise ValueError(f"expected (batch, samples), got {x.shape}")
        dtype = self.params["f1"].dtype
        self.x = x
        self.h = self.kernels().astype(dtype)
        frames = sliding_window_view(x, self.length, axis=1)  # (B, L, K)
        return np.ascontiguousarray(np.matmul(frames, self.h.T).transpose(0, 2, 1))

    def backward(self, dy):
        frames = sliding_window_view(self.x, self.length, axis=1)
        dh = np.einsum("bfl,blk->fk", dy, frames, optimize=True).astype(np.float64)
        # d kernel / d cutoff f for the windowed low-pass term a f sinc(a f m)
        m = np.arange(self.length) - (self.length - 1) / 2
        a = 2.0 / self.sample_rate
        win = np.hamming(self.length)
        lo, hi, raw_band, band = self.cutoffs()
        d_lp = lambda f: a * np.cos(np.pi * a * f[:, None] * m) * win
        g_hi = np.sum(dh * d_lp(hi), axis=1)
        g_lo = -np.sum(dh * d_lp(lo), axis=1)
        f1 = self.params["f1"].astype(np.float64)
        f2 = self.params["f2"].astype(np.float64)
        # hi = min(lo + band, nyq); band = max(|f2 - f1|, min_band); lo = |f1|
        g_sum = np.where(lo + band < self.sample_rate / 2, g_hi, 0.0)
        g_lo_total = g_lo + g_sum
        g_band = g_sum * (raw_band > self.min_band)
        s = np.sign(f2 - f1)
        df1 = g_lo_total * np.sign(f1) - g_band * s
        df2 = g_band * s
        dtype = self.params["f1"].dtype
        self._acc("f1", df1.astype(dtype))
        self._acc("f2", df2.astype(dtype))
        if not self.needs_input_grad:
            return None
        dframes = np.matmul(dy.transpose(0, 2, 1), self.h)  # (B, L, K)
        dx = np.zeros_like(self.x)
        n_out = dframes.shape[1]
        for k in range(self.length):
            dx[:, k : k + n_out] += dframes[:, :, k]
        return dx


# --- convolutions -------------------------------------------------------------


class Conv1d(Layer):
    """Valid 1-D convolution (cross-correlation), (B, Cin, L) -> (B, Cout, L - K + 1)."""

    def __init__(self, c_in, c_out, kernel, rng, dtype=np.float32):
        super().__init__()
        bound = np.sqrt(1.0 / (c_in * kernel))
        self.kernel = kernel
        self.params = {
            "weight": _uniform(rng, (c_out, c_in, kernel), bound, dtype),
            "bias": _uniform(rng, (c_out,), bound, dtype),
        }

    def forward(self, x):
        self.x = x
        cols = sliding_window_view(x, self.kernel, axis=2)  # (B, Cin, Lout, K)
        b, c_in, l_out, k = cols.shape
        cols = cols.transpose(0, 2, 1, 3).reshape(b, l_out, c_in * k)
        w = self.params["weight"].reshape(len(self.params["bias"]), -1)
        y = np.matmul(cols, w.T) + self.params["bias"]
        return np.ascontiguousarray(y.transpose(0, 2, 1))

    def backward(self, dy):
        b, c_in, _ = self.x.shape
        c_out, _, k = self.params["weight"].shape
        l_out = dy.shape[2]
        cols = sliding_window_view(self.x, k, axis=2).transpose(0, 2, 1, 3).reshape(b, l_out, c_in * k)
        dyt = dy.transpose(0, 2, 1)  # (B, Lout, Cout)
        self._acc("weight", np.einsum("blo,blk->ok", dyt, cols, optimize=True).reshape(c_out, c_in, k))
        self._acc("bias", dy.sum(axis=(0, 2)))
        dcols = np.matmul(dyt, self.params["weight"].reshape(c_out, -1)).reshape(b, l_out, c_in, k)
        dx = np.zeros_like(self.x)
        for j in range(k):
            dx[:, :, j : j + l_out] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dx


class Conv2d(Layer):
    """Dilated 2-D convolution with 'same' zero padding, (B, Cin, H, W) -> (B, Cout, H, W).

    Kernel sizes must be odd. Columns are built one sample at a time and
    rebuilt during backward rather than cached, which bounds memory at the
    cost of one extra gather.
    """

    def __init__(self, c_in, c_out, kernel, dilation, rng, dtype=np.float32):
        super().__init__()
        kh, kw = kernel
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("kernel sizes must be odd for 'same' padding")
        self.kernel = (kh, kw)
        self.dilation = tuple(dilation)
        self.pad = ((kh - 1) // 2 * self.dilation[0], (kw - 1) // 2 * self.dilation[1])
        bound = np.sqrt(1.0 / (c_in * kh * kw))
        self.params = {
            "weight": _uniform(rng, (c_out, c_in, kh, kw), bound, dtype),
            "bias": _uniform(rng, (c_out,), bound, dtype),
        }

    def _cols(self, xp, h, w):
        kh, kw = self.kernel
        dh, dw = self.dilation
        c_in = xp.shape[0]
        cols = np.empty((c_in, kh, kw, h, w), dtype=xp.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, i, j] = xp[:, i * dh : i * dh + h, j * dw : j * dw + w]
        return cols.reshape(c_in * kh * kw, h * w)

    def forward(self, x):
        b, c_in, h, w = x.shape
        ph, pw = self.pad
        self.xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        self.hw = (h, w)
        wm = self.params["weight"].reshape(self.params["weight"].shape[0], -1)
        out = np.empty((b, wm.shape[0], h * w), dtype=x.dtype)
        for n in range(b):
            np.matmul(wm, self._cols(self.xp[n], h, w), out=out[n])
        out += self.params["bias"][None, :, None]
        return out.reshape(b, -1, h, w)

    def backward(self, dy):
        b = dy.shape[0]
        h, w = self.hw
        kh, kw = self.kernel
        dh, dw = self.dilation
        c_out, c_in = self.params["weight"].shape[:2]
        wm = self.params["weight"].reshape(c_out, -1)
        dwm = np.zeros_like(wm)
        dxp = np.zeros_like(self.xp)
        for n in range(b):
            g = dy[n].reshape(c_out, h * w)
            cols = self._cols(self.xp[n], h, w)
            dwm += g @ cols.T
            dcols = (wm.T @ g).reshape(c_in, kh, kw, h, w)
            for i in range(kh):
                for j in range(kw):
                    dxp[n, :, i * dh : i * dh + h, j * dw : j * dw + w] += dcols[:, i, j]
        self._acc("weight", dwm.reshape(self.params["weight"].shape))
        self._acc("bias", dy.sum(axis=(0, 2, 3)))
        ph, pw = self.pad
        return dxp[:, :, ph : ph + h, pw : pw + w]


# --- normalization, activation, pooling -------------------------------------------


class LayerNorm(Layer):
    """Per-sample normalization over all non-batch features, per-channel affine (channel = axis 1)."""

    def __init__(self, channels, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.params = {"gamma": np.ones(channels, dtype), "beta": np.zeros(channels, dtype)}

    def _bshape(self, x):
        return (1, -1) + (1,) * (x.ndim - 2)

    def forward(self, x):
        axes = tuple(range(1, x.ndim))
        mu = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + self.eps)
        self.xhat = (x - mu) * self.inv
        s = self._bshape(x)
        return self.xhat * self.params["gamma"].reshape(s) + self.params["beta"].reshape(s)

    def backward(self, dy):
        s = self._bshape(dy)
        red = (0,) + tuple(range(2, dy.ndim))
        self._acc("gamma", (dy * self.xhat).sum(axis=red))
        self._acc("beta", dy.sum(axis=red))
        dxh = dy * self.params["gamma"].reshape(s)
        axes = tuple(range(1, dy.ndim))
        return self.inv * (dxh - dxh.mean(axis=axes, keepdims=True)
                           - self.xhat * (dxh * self.xhat).mean(axis=axes, keepdims=True))


class RMSNorm(Layer):
    """Divides each sample by its root-mean-square over all non-batch features.

    No centering and no affine parameters: the output depends only on the
    input's direction, the quantity cosine scoring sees.
    """

    trainable = False

    def __init__(self, eps=1e-6):
        super().__init__()
        self.eps = eps

    def forward(self, x):
        axes = tuple(range(1, x.ndim))
        self.x = x
        self.inv = 1.0 / np.sqrt((x * x).mean(axis=axes, keepdims=True) + self.eps)
        return x * self.inv

    def backward(self, dy):
        axes = tuple(range(1, dy.ndim))
        proj = (dy * self.x).mean(axis=axes, keepdims=True)
        return self.inv * dy - self.inv**3 * self.x * proj


class LeakyReLU(Layer):
    trainable = False

    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        self.pos = x > 0
        return np.where(self.pos, x, x * self.slope)

    def backward(self, dy):
        return np.where(self.pos, dy, dy * self.slope)


class MaxPool1d(Layer):
    """Non-overlapping max pooling along the last axis; a trailing remainder is dropped."""

    trainable = False

    def __init__(self, size=3):
        super().__init__()
        self.size = size

    def forward(self, x):
        b, c, n = x.shape
        m = n // self.size
        self.in_shape = x.shape
        g = x[:, :, : m * self.size].reshape(b, c, m, self.size)
        self.arg = g.argmax(axis=3)
        return np.take_along_axis(g, self.arg[..., None], axis=3)[..., 0]

    def backward(self, dy):
        b, c, n = self.in_shape
        m = dy.shape[2]
        g = np.zeros((b, c, m, self.size), dtype=dy.dtype)
        np.put_along_axis(g, self.arg[..., None], dy[..., None], axis=3)
        dx = np.zeros(self.in_shape, dtype=dy.dtype)
        dx[:, :, : m * self.size] = g.reshape(b, c, m * self.size)
        return dx


def adaptive_bins(n: int, out: int) -> list[tuple[int, int]]:
    return [((i * n) // out, -((-(i + 1) * n) // out)) for i in range(out)]


class AdaptiveAvgPool2d(Layer):
    """Average over a fixed (rows, cols) grid of possibly overlapping cells."""

    trainable = False

    def __init__(self, grid=(4, 4)):
        super().__init__()
        self.grid = grid

    def forward(self, x):
        self.in_shape = x.shape
        _, _, h, w = x.shape
        self.rows = adaptive_bins(h, self.grid[0])
        self.cols = adaptive_bins(w, self.grid[1])
        out = np.empty(x.shape[:2] + self.grid, dtype=x.dtype)
        for i, (r0, r1) in enumerate(self.rows):
            for j, (c0, c1) in enumerate(self.cols):
                out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
        return out

    def backward(self, dy):
        dx = np.zeros(self.in_shape, dtype=dy.dtype)
        for i, (r0, r1) in enumerate(self.rows):
            for j, (c0, c1) in enumerate(self.cols):
                dx[:, :, r0:r1, c0:c1] += dy[:, :, i, j][:, :, None, None] / ((r1 - r0) * (c1 - c0))
        return dx


class Flatten(Layer):
    trainable = False

    def forward(self, x):
        self.in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self.in_shape)


class Linear(Layer):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, trainable=True):
        super().__init__()
        bound = np.sqrt(1.0 / n_in)
        self.trainable = trainable
        self.params = {
            "weight": _uniform(rng, (n_out, n_in), bound, dtype),
            "bias": _uniform(rng, (n_out,), bound, dtype) if trainable else np.zeros(n_out, dtype),
        }

    def forward(self, x):
        self.x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dy):
        if self.trainable:
            self._acc("weight", dy.T @ self.x)
            self._acc("bias", dy.sum(axis=0))
        return dy @ self.params["weight"]


class Sequential(Layer):
    """Chains layers; with ``check_finite`` every intermediate output is screened for NaN/inf."""

    def __init__(self, *layers: Layer, check_finite: bool = True):
        super().__init__()
        self.layers = list(layers)
        self.check_finite = check_finite

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if self.check_finite and not np.all(np.isfinite(x)):
                raise NonFiniteActivation(f"layer {i} ({type(layer).__name__}) produced non-finite values")
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_layers(self, prefix=""):
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Sequential):
                yield from layer.named_layers(f"{prefix}{i}.")
            else:
                yield f"{prefix}{i}", layer


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    p = softmax(logits)
    n = logits.shape[0]
    idx = np.arange(n)
    loss = -np.mean(np.log(np.maximum(p[idx, labels], np.finfo(p.dtype).tiny)))
    g = p.copy()
    g[idx, labels] -= 1
    return float(loss), g / n
