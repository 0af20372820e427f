"""Mod-LCNN and Mod-LRCNN: light, signal-length-invariant classifiers.

Both networks map an I/Q frame of any length to class probabilities:
1-D convolutions embed the two input channels, a global average pool
collapses time, and a two-layer dense head classifies.

Checkpoint files are a single-line UTF-8 JSON header followed by the
little-endian float32 weights, concatenated in the header's ``weights``
order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensornn as nn
from ._io import atomic_write
from .errors import (
    CheckpointDigestError,
    CheckpointError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    DataError,
)
from .tensornn import LayerSpec

CHECKPOINT_VERSION = 1
ARCHITECTURES = ("LCNN", "LRCNN")


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    n_classes: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")

    def param_count(self) -> int:
        return nn.param_count(self.layers)

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "n_classes": self.n_classes,
            "layers": [s.to_dict() for s in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(d["architecture"], int(d["n_classes"]), tuple(LayerSpec.from_dict(s) for s in d["layers"]))


def _head(n_classes: int, width: int = 64, rate: float = 0.5) -> list[LayerSpec]:
    return [
        LayerSpec("GlobalAvgPool"),
        nn.dense(width, width),
        LayerSpec("ReLU"),
        LayerSpec("Dropout", rate=rate),
        nn.dense(width, n_classes),
        LayerSpec("Softmax"),
    ]


def build_lcnn(n_classes: int) -> ModelConfig:
    """Plain stack: three kernel-7 convolutions (2->32->48->64), each followed by ReLU."""
    relu = LayerSpec("ReLU")
    layers = [nn.conv(2, 32), relu, nn.conv(32, 48), relu, nn.conv(48, 64), relu] + _head(n_classes)
    return ModelConfig("LCNN", n_classes, tuple(layers))


def build_lrcnn(n_classes: int) -> ModelConfig:
    """Two residual blocks (2->48, 48->64)."""
    layers = [
        LayerSpec("ResidualBlock", 2, 48),
        LayerSpec("ResidualBlock", 48, 64),
    ] + _head(n_classes)
    return ModelConfig("LRCNN", n_classes, tuple(layers))


def build_config(architecture: str, n_classes: int) -> ModelConfig:
    arch = architecture.upper().removeprefix("MOD-")
    if arch == "LCNN":
        return build_lcnn(n_classes)
    if arch == "LRCNN":
        return build_lrcnn(n_classes)
    raise ValueError(f"unknown architecture {architecture!r}")


def residual_block_forward(x: np.ndarray, weights: dict[str, np.ndarray]) -> np.ndarray:
    """``h = expand(x)``; ``v = relu(conv2(relu(conv1(h))))``; returns ``h + v``.

    ``weights`` uses the keys ``expand.weight``, ``expand.bias``,
    ``conv1.weight``, ``conv1.bias``, ``conv2.weight``, ``conv2.bias``.
    """
    h = nn.conv1d_forward(x, weights["expand.weight"], weights["expand.bias"])
    u = nn.relu(nn.conv1d_forward(h, weights["conv1.weight"], weights["conv1.bias"]))
    v = nn.relu(nn.conv1d_forward(u, weights["conv2.weight"], weights["conv2.bias"]))
    return h + v


class ResidualBlock(nn.Layer):
    def __init__(self, weights: dict[str, np.ndarray]):
        super().__init__()
        self.expand = nn.Conv1D(weights["expand.weight"], weights["expand.bias"])
        self.body = nn.Sequential(
            [
                ("conv1", nn.Conv1D(weights["conv1.weight"], weights["conv1.bias"])),
                ("relu1", nn.ReLU()),
                ("conv2", nn.Conv1D(weights["conv2.weight"], weights["conv2.bias"])),
                ("relu2", nn.ReLU()),
            ]
        )

    def forward(self, x, training=False, rng=None):
        h = self.expand.forward(x)
        return h + self.body.forward(h)

    def backward(self, grad):
        return self.expand.backward(grad + self.body.backward(grad))

    def named_params(self):
        return {
            **{f"expand.{k}": v for k, v in self.expand.params.items()},
            **self.body.named_params(),
        }

    def named_grads(self):
        return {
            **{f"expand.{k}": v for k, v in self.expand.grads.items()},
            **self.body.named_grads(),
        }


def _layer_name(i: int, spec: LayerSpec) -> str:
    return f"{i}_{spec.kind.lower()}"


class Model:
    """A configured network with its weights.

    Inputs are channels-last float arrays ``(batch, n_samples, 2)`` (columns
    I and Q) or a single ``(n_samples, 2)`` frame. The same weights serve
    every ``n_samples >= 1``.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32, metadata: dict | None = None):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.metadata = dict(metadata or {})
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            init = {}
            for i, spec in enumerate(config.layers):
                for pname, arr in nn.init_weights(spec, rng, self.dtype).items():
                    init[f"{_layer_name(i, spec)}.{pname}"] = arr
            params = init
        self.net = self._build(params)
        loaded = self.params()
        if set(loaded) != set(params):
            raise ValueError("parameter names do not match the configuration")

    def _build(self, params):
        layers = []
        for i, spec in enumerate(self.config.layers):
            name = _layer_name(i, spec)

            def p(key):
                return np.array(params[f"{name}.{key}"], dtype=self.dtype, copy=True)

            if spec.kind == "Conv1D":
                layer = nn.Conv1D(p("weight"), p("bias"))
            elif spec.kind == "Dense":
                layer = nn.Dense(p("weight"), p("bias"))
            elif spec.kind == "ReLU":
                layer = nn.ReLU()
            elif spec.kind == "GlobalAvgPool":
                layer = nn.GlobalAvgPool()
            elif spec.kind == "Dropout":
                layer = nn.Dropout(spec.rate)
            elif spec.kind == "ResidualBlock":
                keys = [f"{a}.{b}" for a in ("expand", "conv1", "conv2") for b in ("weight", "bias")]
                layer = ResidualBlock({k: p(k) for k in keys})
            elif spec.kind == "Softmax":
                continue  # applied by forward(); training fuses it into the loss
            else:  # pragma: no cover
                raise ValueError(spec.kind)
            layers.append((name, layer))
        return nn.Sequential(layers)

    # -- parameters

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays in canonical order (mutating them updates the model)."""
        return self.net.named_params()

    def grads(self) -> dict[str, np.ndarray]:
        return self.net.named_grads()

    def param_count(self) -> int:
        return int(sum(a.size for a in self.params().values()))

    def copy(self, dtype=None) -> "Model":
        return Model(self.config, self.params(), dtype=dtype or self.dtype, metadata=self.metadata)

    # -- forward / backward

    def _prepare(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != 2 or x.shape[1] < 1:
            raise ValueError(f"expected input (batch, n_samples, 2), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        return x

    def logits(self, x, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.net.forward(self._prepare(x), training, rng)

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Class probabilities, ``(batch, n_classes)``."""
        return nn.softmax(self.logits(x, training, rng))

    def features(self, x) -> np.ndarray:
        """Pooled embedding (output of the global average pool)."""
        h = self._prepare(x)
        for _, layer in self.net.layers:
            h = layer.forward(h)
            if isinstance(layer, nn.GlobalAvgPool):
                return h
        raise RuntimeError("model has no pooling layer")

    def loss_and_backward(self, x, labels, rng: np.random.Generator | None = None, training: bool = True):
        """Mean cross-entropy on a batch; leaves gradients in :meth:`grads`."""
        logits = self.logits(x, training, rng)
        loss, grad = nn.softmax_cross_entropy(logits, labels)
        self.net.backward(grad.astype(self.dtype, copy=False))
        return loss, logits

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        out = [self.forward(x[i : i + batch_size]) for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.n_classes))

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        """Argmax class per example; ties go to the lowest class index."""
        return np.argmax(self.predict_proba(x, batch_size), axis=1)


# ---------------------------------------------------------------- checkpoints


def _digest(config_json: str, blob: bytes) -> str:
    h = hashlib.sha256(config_json.encode("utf-8"))
    h.update(blob)
    return h.hexdigest()


def _canonical_config(config: ModelConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))


def checkpoint_bytes(model: Model, metadata: dict | None = None) -> bytes:
    params = model.params()
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in params.values())
    cfg = _canonical_config(model.config)
    header = {
        "format": "augmod-checkpoint",
        "format_version": CHECKPOINT_VERSION,
        **model.config.to_dict(),
        "metadata": {**model.metadata, **(metadata or {})},
        "weights": [{"name": k, "shape": list(a.shape)} for k, a in params.items()],
        "weight_dtype": "<f4",
        "blob_bytes": len(blob),
        "digest": _digest(cfg, blob),
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n" + blob


def save_checkpoint(model: Model, path, metadata: dict | None = None) -> None:
    data = checkpoint_bytes(model, metadata)
    atomic_write(Path(path), lambda f: f.write(data))


def load_checkpoint(path, dtype=np.float32) -> Model:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return checkpoint_from_bytes(raw, dtype=dtype, source=str(path))


def checkpoint_from_bytes(raw: bytes, dtype=np.float32, source: str = "<bytes>") -> Model:
    end = raw.find(b"\n")
    if end < 0:
        raise CheckpointTruncatedError(f"{source}: header is incomplete")
    try:
        header = json.loads(raw[:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{source}: unreadable header ({exc})") from None
    if header.get("format") != "augmod-checkpoint":
        raise CheckpointError(f"{source}: not a checkpoint file")
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{source}: checkpoint version {header.get('format_version')} unsupported (expected {CHECKPOINT_VERSION})"
        )
    blob = raw[end + 1 :]
    if len(blob) < header["blob_bytes"]:
        raise CheckpointTruncatedError(f"{source}: weight blob has {len(blob)} of {header['blob_bytes']} bytes")
    if len(blob) > header["blob_bytes"]:
        raise CheckpointError(f"{source}: {len(blob) - header['blob_bytes']} trailing bytes after weights")
    try:
        config = ModelConfig.from_dict(header)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{source}: invalid model description ({exc})") from None
    if _digest(_canonical_config(config), blob) != header["digest"]:
        raise CheckpointDigestError(f"{source}: digest does not match configuration and weights")
    params, offset = {}, 0
    for entry in header["weights"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        params[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(entry["shape"])
        offset += 4 * n
    try:
        return Model(config, params, dtype=dtype, metadata=header.get("metadata", {}))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{source}: weights do not fit the configuration ({exc})") from None
