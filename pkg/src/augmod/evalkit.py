"""Accuracy reports, confusion matrices and the SNR / length / frequency-offset sweeps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .errors import ClassMismatchError
from .modgen.channel import FREQ_OFFSET_RANGE, SNR_GRID_DB
from .modgen.dataset import Dataset

LENGTH_GRID = (16, 32, 64, 128, 256, 512, 1024)


def default_freq_bins() -> np.ndarray:
    """log10 |freq offset| edges: half decades from 1e-6, closed at 5e-1."""
    lo = math.log10(FREQ_OFFSET_RANGE[0])
    hi = math.log10(FREQ_OFFSET_RANGE[1])
    edges = list(np.arange(lo, hi, 0.5))
    return np.array(edges + [hi])


@dataclass
class GroupStat:
    label: str
    count: int
    correct: int
    lo: float | None = None
    hi: float | None = None

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else float("nan")

    @property
    def error_rate(self) -> float:
        return 1.0 - self.accuracy


@dataclass
class MetricsReport:
    class_names: tuple[str, ...]
    confusion: np.ndarray
    groups: dict[str, GroupStat] = field(default_factory=dict)
    kind: str = "overall"

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.confusion)) / total if total else float("nan")

    @property
    def error_rate(self) -> float:
        return 1.0 - self.accuracy

    def group_accuracy(self, label) -> float:
        return self.groups[str(label)].accuracy

    def group_error(self, label) -> float:
        return self.groups[str(label)].error_rate

    def pooled_accuracy(self, predicate) -> float:
        """Accuracy over all groups for which ``predicate(group)`` holds."""
        chosen = [g for g in self.groups.values() if predicate(g)]
        count = sum(g.count for g in chosen)
        return sum(g.correct for g in chosen) / count if count else float("nan")


def _confusion(labels: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(labels * n_classes + pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def _check(model, dataset: Dataset) -> None:
    if model.config.n_classes != dataset.n_classes:
        raise ClassMismatchError(f"model has {model.config.n_classes} classes, dataset has {dataset.n_classes}")
    names = model.metadata.get("class_names")
    if names is not None and tuple(names) != tuple(dataset.class_names):
        raise ClassMismatchError(f"model classes {tuple(names)} differ from dataset classes {dataset.class_names}")


def predictions(model, dataset: Dataset, length: int | None = None, batch_size: int = 256) -> np.ndarray:
    view = dataset if length is None else dataset.truncated(length)
    return model.predict(view.iq, batch_size=batch_size)


def evaluate(model, dataset: Dataset, length: int | None = None, batch_size: int = 256) -> MetricsReport:
    """Dropout-off inference over ``dataset``, optionally on the first ``length`` samples."""
    _check(model, dataset)
    pred = predictions(model, dataset, length, batch_size)
    return MetricsReport(dataset.class_names, _confusion(dataset.labels, pred, dataset.n_classes))


def _grouped(dataset: Dataset, pred: np.ndarray, keys: np.ndarray, groups: list[tuple[str, object, float | None, float | None]],
             kind: str) -> MetricsReport:
    hit = pred == dataset.labels
    stats = {}
    for label, value, lo, hi in groups:
        sel = keys == value
        stats[label] = GroupStat(label, int(sel.sum()), int(hit[sel].sum()), lo, hi)
    return MetricsReport(dataset.class_names, _confusion(dataset.labels, pred, dataset.n_classes), stats, kind)


def sweep_snr(model, dataset: Dataset, length: int | None = None, batch_size: int = 256) -> MetricsReport:
    """Accuracy per stored SNR value (dB)."""
    _check(model, dataset)
    pred = predictions(model, dataset, length, batch_size)
    snr = np.round(dataset.snr_db).astype(int)
    values = sorted(set(SNR_GRID_DB) | set(np.unique(snr).tolist()))
    groups = [(str(v), v, float(v), float(v)) for v in values]
    return _grouped(dataset, pred, snr, groups, "snr")


def sweep_length(model, dataset: Dataset, lengths=LENGTH_GRID, batch_size: int = 256) -> MetricsReport:
    """Evaluate the same model on the first N samples for each N in ``lengths``.

    The confusion matrix is summed over all lengths, so the overall accuracy
    is the count-weighted mean of the per-length accuracies.
    """
    _check(model, dataset)
    if max(lengths) > dataset.n_samples:
        raise ValueError(f"dataset stores {dataset.n_samples} samples, sweep needs {max(lengths)}")
    confusion = np.zeros((dataset.n_classes, dataset.n_classes), dtype=np.int64)
    stats = {}
    for n in lengths:
        pred = predictions(model, dataset, n, batch_size)
        confusion += _confusion(dataset.labels, pred, dataset.n_classes)
        stats[str(n)] = GroupStat(str(n), len(dataset), int(np.sum(pred == dataset.labels)), float(n), float(n))
    return MetricsReport(dataset.class_names, confusion, stats, "length")


def _bin_label(lo: float, hi: float, sign: str = "") -> str:
    return f"{sign}{10**lo:.3g}..{10**hi:.3g}"


def sweep_freq_offset(model, dataset: Dataset, bins=None, split_sign: bool = False,
                      length: int | None = None, batch_size: int = 256) -> MetricsReport:
    """Accuracy per log10 |freq offset| bin (sign folded unless ``split_sign``).

    ``bins`` are increasing log10 edges; values outside are clipped into the
    first or last bin. Group ``lo``/``hi`` hold the bin edges in log10 units.
    """
    _check(model, dataset)
    mag = np.abs(dataset.freq_offset.astype(np.float64))
    if np.any(mag == 0):
        raise ValueError("dataset contains examples without frequency offset")
    edges = default_freq_bins() if bins is None else np.asarray(bins, dtype=float)
    logm = np.clip(np.log10(mag), edges[0], edges[-1])
    idx = np.clip(np.searchsorted(edges, logm, side="right") - 1, 0, len(edges) - 2)
    pred = predictions(model, dataset, length, batch_size)
    groups = []
    if split_sign:
        sign = np.where(dataset.freq_offset < 0, -1, 1)
        keys = idx * sign + sign  # distinct key per (bin, sign); never 0
        for s, tag in ((-1, "-"), (1, "+")):
            for b in range(len(edges) - 1):
                groups.append((_bin_label(edges[b], edges[b + 1], tag), b * s + s, edges[b], edges[b + 1]))
    else:
        keys = idx
        for b in range(len(edges) - 1):
            groups.append((_bin_label(edges[b], edges[b + 1]), b, edges[b], edges[b + 1]))
    return _grouped(dataset, pred, keys, groups, "freq")


# ---------------------------------------------------------------- CSV

CSV_COLUMNS = ("group", "lo", "hi", "count", "correct", "accuracy", "error_rate")


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def report_to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for g in report.groups.values():
        w.writerow([g.label, _num(g.lo), _num(g.hi), g.count, g.correct, _num(g.accuracy), _num(g.error_rate)])
    if report.total or report.groups:
        w.writerow([])
        w.writerow(["#confusion", report.kind, *report.class_names])
        for name, row in zip(report.class_names, report.confusion):
            w.writerow([name, "", *map(int, row)])
    return buf.getvalue()


def emit_csv(report: MetricsReport, path) -> None:
    """Group rows (label, edges, count, correct, accuracy, error rate), then the confusion block."""
    text = report_to_csv(report)
    atomic_write(Path(path), lambda f: f.write(text.encode("utf-8")))


def read_csv(path) -> MetricsReport:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: not a metrics CSV")
    groups = {}
    i = 1
    while i < len(rows) and rows[i]:
        label, lo, hi, count, correct = rows[i][:5]
        groups[label] = GroupStat(
            label, int(count), int(correct), float(lo) if lo else None, float(hi) if hi else None
        )
        i += 1
    while i < len(rows) and not rows[i]:
        i += 1
    if i == len(rows):
        return MetricsReport((), np.zeros((0, 0), dtype=np.int64), groups)
    head = rows[i]
    kind, names = head[1], tuple(head[2:])
    body = rows[i + 1 : i + 1 + len(names)]
    confusion = np.array([[int(v) for v in r[2:]] for r in body], dtype=np.int64).reshape(len(names), len(names))
    return MetricsReport(names, confusion, groups, kind)
