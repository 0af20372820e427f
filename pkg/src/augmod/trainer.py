"""Adam training loops: fixed-length, variable-length and fine-tuning."""

from __future__ import annotations

import contextlib
import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import evalkit
from ._io import atomic_write
from .errors import ClassMismatchError, TrainingDivergedError
from .models import Model, build_config, load_checkpoint
from .modgen.dataset import Dataset

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- length policies


@dataclass(frozen=True)
class FixedLength:
    """Keep the first ``n`` samples of every example (``None`` = stored length)."""

    n: int | None = None

    def check(self, stored: int) -> None:
        if self.n is not None and not 1 <= self.n <= stored:
            raise ValueError(f"fixed length {self.n} not in [1, {stored}]")

    def draw(self, rng: np.random.Generator, stored: int) -> int:
        return stored if self.n is None else self.n

    def __str__(self):
        return "fixed" if self.n is None else f"fixed:{self.n}"


@dataclass(frozen=True)
class VariableLength:
    """One uniformly drawn integer length in ``[min, max]`` per batch."""

    min: int = 16
    max: int = 1024

    def __post_init__(self):
        if not 16 <= self.min <= self.max:
            raise ValueError("variable length needs 16 <= min <= max")

    def check(self, stored: int) -> None:
        if self.max > stored:
            raise ValueError(f"variable length max {self.max} exceeds stored length {stored}")

    def draw(self, rng: np.random.Generator, stored: int) -> int:
        return int(rng.integers(self.min, self.max + 1))

    def __str__(self):
        return f"variable:{self.min}:{self.max}"


def parse_length(text: str) -> FixedLength | VariableLength:
    """Parse ``fixed``, ``fixed:N``, ``variable`` or ``variable:MIN:MAX``."""
    parts = text.strip().lower().split(":")
    try:
        if parts[0] == "fixed" and len(parts) <= 2:
            return FixedLength(int(parts[1]) if len(parts) == 2 else None)
        if parts[0] == "variable" and len(parts) in (1, 3):
            return VariableLength(*map(int, parts[1:])) if len(parts) == 3 else VariableLength()
    except ValueError:
        pass
    raise ValueError(f"bad length policy {text!r}; use fixed[:N] or variable[:MIN:MAX]")


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``.

    The step index is ``state.t + 1``. Non-finite gradients raise before
    anything is modified.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for {name} at step {state.t + 1}")
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        denom = np.sqrt(v / c2)
        denom += eps
        p -= (lr / c1) * m / denom
    return state


# ---------------------------------------------------------------- config / history


@dataclass
class TrainConfig:
    architecture: str = "LRCNN"
    epochs: int = 200
    batch_size: int = 512
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    length: FixedLength | VariableLength = field(default_factory=FixedLength)
    master_seed: int = 0
    init_checkpoint: str | None = None
    deterministic: bool = True
    eval_length: int | None = None
    eval_batch_size: int = 256

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    def describe(self) -> dict:
        return {
            "architecture": self.architecture,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "length": str(self.length),
            "master_seed": self.master_seed,
            "init_checkpoint": self.init_checkpoint,
            "deterministic": self.deterministic,
        }


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_err: float
    test_err: float
    seconds: float | None


HISTORY_COLUMNS = ("epoch", "train_loss", "train_err", "test_err", "seconds")


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path) -> None:
        def _fmt(v):
            return "" if v is None else repr(v)

        def _write(f):
            lines = [",".join(HISTORY_COLUMNS)]
            for r in self.records:
                lines.append(",".join(_fmt(getattr(r, c)) for c in HISTORY_COLUMNS))
            f.write(("\n".join(lines) + "\n").encode("utf-8"))

        atomic_write(Path(path), _write)

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        return cls(
            [
                EpochRecord(
                    int(r["epoch"]),
                    float(r["train_loss"]),
                    float(r["train_err"]),
                    float(r["test_err"]),
                    float(r["seconds"]) if r["seconds"] else None,
                )
                for r in rows
            ]
        )


@dataclass(frozen=True)
class EpochStats:
    loss: float
    error: float
    lengths: tuple[int, ...]


# ---------------------------------------------------------------- loops


def _stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=key)))


def init_model(config: TrainConfig, n_classes: int) -> Model:
    return Model(build_config(config.architecture, n_classes), rng=_stream(config.master_seed, 0))


def train_epoch(model: Model, train: Dataset, config: TrainConfig, rng: np.random.Generator,
                state: AdamState) -> EpochStats:
    """One pass over ``train`` in a fresh random order, one Adam step per batch."""
    n = len(train)
    if n == 0:
        raise ValueError("training set is empty")
    stored = train.n_samples
    order = rng.permutation(n)
    total_loss = 0.0
    wrong = 0
    lengths = []
    params = model.params()
    for start in range(0, n, config.batch_size):
        idx = order[start : start + config.batch_size]
        length = config.length.draw(rng, stored)
        lengths.append(length)
        x = train.iq[idx, :length]
        y = train.labels[idx]
        loss, logits = model.loss_and_backward(x, y, rng, training=True)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at Adam step {state.t + 1}")
        adam_step(params, model.grads(), state, config.lr, config.beta1, config.beta2, config.eps)
        total_loss += loss * idx.size
        wrong += int(np.count_nonzero(np.argmax(logits, axis=1) != y))
    return EpochStats(total_loss / n, wrong / n, tuple(lengths))


def _check_classes(model: Model, data: Dataset, what: str) -> None:
    if model.config.n_classes != data.n_classes:
        raise ClassMismatchError(f"model has {model.config.n_classes} classes but {what} has {data.n_classes}")
    names = model.metadata.get("class_names")
    if names is not None and tuple(names) != tuple(data.class_names):
        raise ClassMismatchError(f"class names of the model {names} differ from those of {what} {data.class_names}")


def fit(config: TrainConfig, train: Dataset, test: Dataset | None = None,
        model: Model | None = None, on_epoch=None) -> tuple[Model, TrainHistory]:
    """Train for ``config.epochs`` epochs and return the final model and its history.

    Starts from ``model`` if given, else from ``config.init_checkpoint``,
    else from a fresh initialization seeded by ``config.master_seed``.
    Test error is measured after every epoch with dropout off, at
    ``config.eval_length`` samples (default: the stored length).
    """
    config.validate()
    config.length.check(train.n_samples)
    if model is None:
        if config.init_checkpoint:
            model = load_checkpoint(config.init_checkpoint)
        else:
            model = init_model(config, train.n_classes)
    if model.config.architecture != build_config(config.architecture, 2).architecture:
        raise ValueError(
            f"checkpoint architecture {model.config.architecture} does not match {config.architecture}"
        )
    _check_classes(model, train, "the training set")
    if test is not None:
        _check_classes(model, test, "the test set")

    base_epochs = int(model.metadata.get("epochs_seen", 0))
    history = TrainHistory()
    state = AdamState()
    limits = threadpool_limits(limits=1, user_api="blas") if config.deterministic else contextlib.nullcontext()
    with limits:
        for epoch in range(1, config.epochs + 1):
            tic = time.perf_counter()
            stats = train_epoch(model, train, config, _stream(config.master_seed, 1, epoch), state)
            test_err = float("nan")
            if test is not None and len(test):
                report = evalkit.evaluate(model, test, config.eval_length, batch_size=config.eval_batch_size)
                test_err = report.error_rate
            seconds = time.perf_counter() - tic
            record = EpochRecord(epoch, stats.loss, stats.error, test_err, None if config.deterministic else seconds)
            history.records.append(record)
            logger.info(
                "epoch %d/%d loss %.4f train_err %.4f test_err %.4f (%.1fs)",
                epoch, config.epochs, stats.loss, stats.error, test_err, seconds,
            )
            if on_epoch is not None:
                on_epoch(model, record)

    model.metadata.update(
        epochs_seen=base_epochs + config.epochs,
        master_seed=config.master_seed,
        dataset_sha256=train.manifest.get("data_sha256"),
        class_names=list(train.class_names),
        train_config=config.describe(),
    )
    return model, history


def fine_tune(base: Model | str | Path, train: Dataset, config: TrainConfig,
              test: Dataset | None = None) -> tuple[Model, TrainHistory]:
    """Continue training from ``base`` (a model or a checkpoint path) on a new dataset."""
    model = load_checkpoint(base) if isinstance(base, (str, Path)) else base.copy()
    return fit(config, train, test, model=model)
