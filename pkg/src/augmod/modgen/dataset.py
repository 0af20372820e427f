"""AugMod dataset files: generation, binary container and sidecar manifest.

File layout (little-endian)::

    b"AGMD" | u32 version | u32 n_examples | u32 n_samples | u32 n_classes
    n_classes x (u32 byte length, UTF-8 class name)
    n_examples x (u8 class, f32 snr_db, f32 sampling_ratio, f32 phase,
                  f32 delay, f32 rolloff, f32 freq_offset,
                  n_samples x (f32 I, f32 Q))

The manifest lives next to the data file as ``<path>.json``.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .._io import atomic_write, file_sha256
from ..errors import DataError, DatasetFormatError
from .channel import SNR_GRID_DB, example_rng, sample_impairments, synthesize
from .constellation import ALL_SCHEMES, ModulationScheme

logger = logging.getLogger(__name__)

MAGIC = b"AGMD"
FORMAT_VERSION = 1
PARAM_FIELDS = ("snr_db", "sampling_ratio", "phase", "delay", "rolloff", "freq_offset")


def record_dtype(n_samples: int) -> np.dtype:
    return np.dtype(
        [("label", "u1")]
        + [(name, "<f4") for name in PARAM_FIELDS]
        + [("iq", "<f4", (n_samples, 2))]
    )


@dataclass
class GenConfig:
    examples_per_pair: int = 5000
    n_samples: int = 1024
    master_seed: int = 0
    freq_offset_enabled: bool = False
    schemes: tuple[str, ...] = tuple(s.name for s in ALL_SCHEMES)
    snr_grid: tuple[int, ...] = SNR_GRID_DB

    def validate(self) -> None:
        if self.examples_per_pair < 1:
            raise ValueError("examples_per_pair must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not self.schemes or len(set(self.schemes)) != len(self.schemes):
            raise ValueError("class list must be non-empty and without duplicates")
        if len(self.schemes) > 255:
            raise ValueError("at most 255 classes fit the u8 label field")
        for name in self.schemes:
            ModulationScheme.from_name(name)
        if not self.snr_grid or any(s not in SNR_GRID_DB for s in self.snr_grid):
            raise ValueError(f"SNR grid must be a non-empty subset of {SNR_GRID_DB}")

    @property
    def n_examples(self) -> int:
        return len(self.schemes) * len(self.snr_grid) * self.examples_per_pair


@dataclass
class Dataset:
    """In-memory labeled examples; ``iq`` has shape ``(n, n_samples, 2)``."""

    iq: np.ndarray
    labels: np.ndarray
    params: dict[str, np.ndarray]
    class_names: tuple[str, ...]
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.iq.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def snr_db(self) -> np.ndarray:
        return self.params["snr_db"]

    @property
    def freq_offset(self) -> np.ndarray:
        return self.params["freq_offset"]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            iq=self.iq[index],
            labels=self.labels[index],
            params={k: v[index] for k, v in self.params.items()},
            class_names=self.class_names,
            manifest=self.manifest,
        )

    def truncated(self, n_samples: int) -> "Dataset":
        """View keeping only the first ``n_samples`` samples of every example."""
        if not 1 <= n_samples <= self.n_samples:
            raise ValueError(f"cannot truncate {self.n_samples}-sample examples to {n_samples}")
        return Dataset(self.iq[:, :n_samples], self.labels, self.params, self.class_names, self.manifest)

    def split_halves(self) -> tuple["Dataset", "Dataset"]:
        """Stratified 50/50 split: within each (class, SNR) group, in file order,
        the first half goes to train and the rest to test."""
        train, test = [], []
        keys = self.labels.astype(np.int64) * 1000 + np.round(self.snr_db).astype(np.int64)
        for key in np.unique(keys):
            idx = np.flatnonzero(keys == key)
            half = (idx.size + 1) // 2
            train.append(idx[:half])
            test.append(idx[half:])
        return self.subset(np.sort(np.concatenate(train))), self.subset(np.sort(np.concatenate(test)))

    def records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=record_dtype(self.n_samples))
        rec["label"] = self.labels
        for name in PARAM_FIELDS:
            rec[name] = self.params[name]
        rec["iq"] = self.iq
        return rec


@dataclass
class DatasetFile:
    path: Path
    manifest_path: Path
    n_examples: int
    n_samples: int
    sha256: str


def manifest_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _header_bytes(n_examples: int, n_samples: int, class_names) -> bytes:
    parts = [MAGIC, struct.pack("<IIII", FORMAT_VERSION, n_examples, n_samples, len(class_names))]
    for name in class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    return b"".join(parts)


def write_dataset(dataset: Dataset, path) -> None:
    def _write(f):
        f.write(_header_bytes(len(dataset), dataset.n_samples, dataset.class_names))
        f.write(dataset.records().tobytes())

    atomic_write(Path(path), _write)


def read_header(f) -> tuple[int, int, tuple[str, ...]]:
    magic = f.read(4)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    head = f.read(16)
    if len(head) != 16:
        raise DatasetFormatError("truncated header")
    version, n_examples, n_samples, n_classes = struct.unpack("<IIII", head)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {version}")
    names = []
    for _ in range(n_classes):
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise DatasetFormatError("truncated class table")
        (length,) = struct.unpack("<I", raw_len)
        raw = f.read(length)
        if len(raw) != length:
            raise DatasetFormatError("truncated class table")
        names.append(raw.decode("utf-8"))
    return n_examples, n_samples, tuple(names)


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            n_examples, n_samples, names = read_header(f)
            dtype = record_dtype(n_samples)
            raw = f.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    except DatasetFormatError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
    if len(raw) != n_examples * dtype.itemsize:
        raise DatasetFormatError(
            f"{path}: expected {n_examples * dtype.itemsize} payload bytes, found {len(raw)}"
        )
    rec = np.frombuffer(raw, dtype=dtype, count=n_examples)
    if n_examples and rec["label"].max() >= len(names):
        raise DatasetFormatError(f"{path}: class index out of range")
    manifest = {}
    mpath = manifest_path_for(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    return Dataset(
        iq=np.ascontiguousarray(rec["iq"]),
        labels=rec["label"].astype(np.int64),
        params={name: rec[name].copy() for name in PARAM_FIELDS},
        class_names=names,
        manifest=manifest,
    )


def _pair_records(config: GenConfig, class_index: int, snr_index: int) -> bytes:
    scheme = ModulationScheme.from_name(config.schemes[class_index])
    snr = config.snr_grid[snr_index]
    grid_index = SNR_GRID_DB.index(snr)
    rec = np.empty(config.examples_per_pair, dtype=record_dtype(config.n_samples))
    for i in range(config.examples_per_pair):
        rng = example_rng(config.master_seed, scheme.value, grid_index, i)
        params = sample_impairments(rng, config.freq_offset_enabled, snr)
        frame = synthesize(scheme, params, config.n_samples, rng)
        rec["label"][i] = class_index
        for name in PARAM_FIELDS:
            rec[name][i] = getattr(params, name)
        rec["iq"][i] = frame.as_array()
    return rec.tobytes()


def _pair_job(args):
    return _pair_records(*args)


def generate_dataset(config: GenConfig, path, workers: int = 1, deterministic: bool = False) -> DatasetFile:
    """Generate every (class, SNR, index) example of ``config`` into ``path``.

    Examples are written class-major, then SNR, then index. The per-example
    stream depends only on ``(master_seed, scheme, snr, index)``, so the file
    does not depend on ``workers``.
    """
    config.validate()
    path = Path(path)
    jobs = [(config, c, s) for c in range(len(config.schemes)) for s in range(len(config.snr_grid))]
    logger.info(
        "generating %d examples x %d samples into %s (seed %d, freq offset %s)",
        config.n_examples, config.n_samples, path, config.master_seed,
        "on" if config.freq_offset_enabled else "off",
    )

    def _write(f):
        f.write(_header_bytes(config.n_examples, config.n_samples, config.schemes))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for chunk in pool.map(_pair_job, jobs):
                    f.write(chunk)
        else:
            for job in jobs:
                f.write(_pair_job(job))

    atomic_write(path, _write)
    digest = file_sha256(path)
    if deterministic:
        epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
        created = _dt.datetime.fromtimestamp(epoch, _dt.timezone.utc)
    else:
        created = _dt.datetime.now(_dt.timezone.utc)
    manifest = {
        "format_version": FORMAT_VERSION,
        "master_seed": config.master_seed,
        "config": {**asdict(config), "schemes": list(config.schemes), "snr_grid": list(config.snr_grid)},
        "created": created.isoformat(),
        "n_examples": config.n_examples,
        "n_samples": config.n_samples,
        "data_sha256": digest,
    }
    mpath = manifest_path_for(path)
    atomic_write(mpath, lambda f: f.write((json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()))
    return DatasetFile(path, mpath, config.n_examples, config.n_samples, digest)
