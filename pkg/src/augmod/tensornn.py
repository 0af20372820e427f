"""A small 1-D convolutional network kernel with hand-written backward passes.

Activations are channels-last arrays of shape ``(batch, time, channels)``;
convolution weights are stored ``(out_channels, in_channels, kernel)``.
All ops work in whatever float dtype they are given (float32 for training,
float64 for gradient checks).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("Conv1D", "Dense", "ReLU", "GlobalAvgPool", "Dropout", "Softmax", "ResidualBlock")
CONV_KERNEL_SIZES = (1, 7)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_features: int = 0
    out_features: int = 0
    kernel_size: int = 0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "Conv1D" and self.kernel_size not in CONV_KERNEL_SIZES:
            raise ValueError(f"Conv1D kernel size must be one of {CONV_KERNEL_SIZES}")
        if self.kind in ("Conv1D", "Dense", "ResidualBlock") and min(self.in_features, self.out_features) < 1:
            raise ValueError(f"{self.kind} needs positive in/out sizes")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v or k == "kind"}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def conv(in_ch: int, out_ch: int, k: int = 7) -> LayerSpec:
    return LayerSpec("Conv1D", in_ch, out_ch, kernel_size=k)


def dense(d_in: int, d_out: int) -> LayerSpec:
    return LayerSpec("Dense", d_in, d_out)


def _conv_params(c_in: int, c_out: int, k: int) -> int:
    return c_in * c_out * k + c_out


def param_count(specs: Iterable[LayerSpec]) -> int:
    """Number of trainable scalars in a layer table (independent of signal length)."""
    total = 0
    for s in specs:
        if s.kind == "Conv1D":
            total += _conv_params(s.in_features, s.out_features, s.kernel_size)
        elif s.kind == "Dense":
            total += s.in_features * s.out_features + s.out_features
        elif s.kind == "ResidualBlock":
            total += _conv_params(s.in_features, s.out_features, 1)
            total += 2 * _conv_params(s.out_features, s.out_features, 7)
    return total


# ---------------------------------------------------------------- functional ops


def _check_conv_shapes(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> None:
    if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
        raise ValueError(f"expected x (B,T,C), w (Co,Ci,K), b (Co,); got {x.shape}, {w.shape}, {b.shape}")
    if x.shape[2] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    if w.shape[2] % 2 != 1:
        raise ValueError("kernel size must be odd")
    if x.shape[1] < 1:
        raise ValueError("time length must be >= 1")


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``(B,T,C)`` -> ``(B*T, K*C)`` with zero "same" padding; column order (k, c)."""
    bsz, t, c = x.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, T, C, K)
    return win.transpose(0, 1, 3, 2).reshape(bsz * t, k * c)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation with "same" zero padding; output time length equals input's."""
    _check_conv_shapes(x, w, b)
    bsz, t, c_in = x.shape
    c_out, _, k = w.shape
    if k == 1:
        y = x.reshape(bsz * t, c_in) @ w[:, :, 0].T
    else:
        y = _im2col(x, k) @ w.transpose(0, 2, 1).reshape(c_out, k * c_in).T
    y += b
    return y.reshape(bsz, t, c_out)


def conv1d_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients ``(grad_x, grad_w, grad_b)`` of :func:`conv1d_forward`."""
    c_out, c_in, k = w.shape
    if grad_out.shape != x.shape[:2] + (c_out,):
        raise ValueError(f"grad_out {grad_out.shape} does not match input {x.shape} and weights {w.shape}")
    bsz, t, _ = x.shape
    g = grad_out.reshape(bsz * t, c_out)
    grad_b = g.sum(axis=0)
    if k == 1:
        xf = x.reshape(bsz * t, c_in)
        grad_w = (g.T @ xf)[:, :, None]
        grad_x = (g @ w[:, :, 0]).reshape(bsz, t, c_in)
        return grad_x, grad_w, grad_b
    w2 = w.transpose(0, 2, 1).reshape(c_out, k * c_in)
    grad_w = (g.T @ _im2col(x, k)).reshape(c_out, k, c_in).transpose(0, 2, 1)
    gcols = (g @ w2).reshape(bsz, t, k, c_in)
    pad = (k - 1) // 2
    gxp = np.zeros((bsz, t + 2 * pad, c_in), dtype=grad_out.dtype)
    for j in range(k):
        gxp[:, j : j + t, :] += gcols[:, :, j, :]
    return gxp[:, pad : pad + t, :], np.ascontiguousarray(grad_w), grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient 0 at x == 0
    return grad_out * (x > 0)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the time axis: ``(B,T,C)`` -> ``(B,C)``."""
    if x.shape[1] < 1:
        raise ValueError("cannot pool an empty time axis")
    return x.mean(axis=1)


def global_avg_pool_backward(grad_out: np.ndarray, t: int) -> np.ndarray:
    return np.broadcast_to(grad_out[:, None, :] / t, (grad_out.shape[0], t, grad_out.shape[1])).copy()


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map; ``x`` is ``(B, D_in)``, ``w`` is ``(D_out, D_in)``."""
    if x.shape[-1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w.T + b


def dense_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray):
    if grad_out.shape[-1] != w.shape[0]:
        raise ValueError(f"grad_out {grad_out.shape} does not match weights {w.shape}")
    return grad_out @ w, grad_out.T @ x, grad_out.sum(axis=0)


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is ``None`` when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape, dtype=np.float64) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Mean categorical cross-entropy and its gradient w.r.t. the logits.

    Accepts a single logit vector with an integer label, or a batch
    ``(B, N_c)`` with a label array.
    """
    single = logits.ndim == 1
    logits2 = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels))
    n, n_c = logits2.shape
    if n_c < 2:
        raise ValueError("need at least two classes")
    if labels.shape != (n,):
        raise ValueError("one label per logit row expected")
    if labels.min() < 0 or labels.max() >= n_c:
        raise ValueError(f"label out of range [0, {n_c})")
    z = logits2 - logits2.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, (grad[0] if single else grad)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def he_normal(shape, fan_in: int, rng: np.random.Generator, dtype=np.float32):
    return (rng.standard_normal(size=shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def init_weights(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform convolutions (fans count channels x kernel), He-normal dense, zero biases."""
    if spec.kind == "Conv1D":
        k, ci, co = spec.kernel_size, spec.in_features, spec.out_features
        return {
            "weight": glorot_uniform((co, ci, k), ci * k, co * k, rng, dtype),
            "bias": np.zeros(co, dtype=dtype),
        }
    if spec.kind == "Dense":
        return {
            "weight": he_normal((spec.out_features, spec.in_features), spec.in_features, rng, dtype),
            "bias": np.zeros(spec.out_features, dtype=dtype),
        }
    if spec.kind == "ResidualBlock":
        ci, co = spec.in_features, spec.out_features
        out = {}
        for name, sub in (("expand", conv(ci, co, 1)), ("conv1", conv(co, co)), ("conv2", conv(co, co))):
            for pname, arr in init_weights(sub, rng, dtype).items():
                out[f"{name}.{pname}"] = arr
        return out
    return {}


# ---------------------------------------------------------------- layers


class Layer:
    """Stateful wrapper around a functional op: caches what backward needs."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def named_params(self) -> dict[str, np.ndarray]:
        return self.params

    def named_grads(self) -> dict[str, np.ndarray]:
        return self.grads


class Conv1D(Layer):
    def __init__(self, weight, bias):
        super().__init__()
        self.params = {"weight": weight, "bias": bias}

    def forward(self, x, training=False, rng=None):
        self._x = x
        return conv1d_forward(x, self.params["weight"], self.params["bias"])

    def backward(self, grad):
        gx, gw, gb = conv1d_backward(grad, self._x, self.params["weight"])
        self.grads = {"weight": gw, "bias": gb}
        self._x = None
        return gx


class Dense(Layer):
    def __init__(self, weight, bias):
        super().__init__()
        self.params = {"weight": weight, "bias": bias}

    def forward(self, x, training=False, rng=None):
        self._x = x
        return dense_forward(x, self.params["weight"], self.params["bias"])

    def backward(self, grad):
        gx, gw, gb = dense_backward(grad, self._x, self.params["weight"])
        self.grads = {"weight": gw, "bias": gb}
        self._x = None
        return gx


class ReLU(Layer):
    def forward(self, x, training=False, rng=None):
        self._x = x
        return relu(x)

    def backward(self, grad):
        g = relu_backward(grad, self._x)
        self._x = None
        return g


class GlobalAvgPool(Layer):
    def forward(self, x, training=False, rng=None):
        self._t = x.shape[1]
        return global_avg_pool(x)

    def backward(self, grad):
        return global_avg_pool_backward(grad, self._t)


class Dropout(Layer):
    def __init__(self, rate):
        super().__init__()
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        y, self._mask = dropout(x, self.rate, training, rng)
        return y

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Sequential(Layer):
    def __init__(self, layers: list[tuple[str, Layer]]):
        super().__init__()
        self.layers = layers

    def forward(self, x, training=False, rng=None):
        for _, layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, grad):
        for _, layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{name}.{p}": a for name, layer in self.layers for p, a in layer.named_params().items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{name}.{p}": a for name, layer in self.layers for p, a in layer.named_grads().items()}
