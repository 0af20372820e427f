"""Command-line entry point: ``augmod {generate,train,eval,sweep,infer,inspect}``.

Exit status: 0 on success, 1 on usage errors, 2 on data or model errors.
Logs go to stderr; metrics go to CSV files.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, evalkit
from .errors import DataError, TrainingDivergedError
from .models import load_checkpoint, save_checkpoint
from .modgen import GenConfig, generate_dataset, read_dataset
from .modgen.dataset import PARAM_FIELDS, file_sha256, manifest_path_for
from .trainer import TrainConfig, fit, parse_length

logger = logging.getLogger("augmod")

THREADS_ENV = "AUGMOD_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker/BLAS threads (default: ${THREADS_ENV} or library default)")
    common.add_argument("--deterministic", action="store_true",
                        help="bit-reproducible artifacts (single-threaded reductions, fixed timestamps)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="augmod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate an AugMod dataset file")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--per-pair", type=int, default=5000, help="examples per (class, SNR) pair")
    g.add_argument("--samples", type=int, default=1024)
    g.add_argument("--freq-offset", type=_on_off, default=False, metavar="{on,off}")

    t = sub.add_parser("train", parents=[common], help="train or fine-tune a model")
    t.add_argument("--dataset", required=True, type=Path)
    t.add_argument("--test-dataset", type=Path, default=None,
                   help="held-out file (default: the second half of --dataset)")
    t.add_argument("--model", choices=("lcnn", "lrcnn"), default="lrcnn")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch", type=int, default=512)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--length", default="fixed", help="fixed, fixed:N, variable or variable:MIN:MAX")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--init", type=Path, default=None, help="start from this checkpoint (fine-tuning)")
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--history", type=Path, default=None)

    split_help = "which half of the dataset to score (default: test, the half training held out)"
    e = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True, type=Path)
    e.add_argument("--dataset", required=True, type=Path)
    e.add_argument("--length", type=int, default=None)
    e.add_argument("--split", choices=("all", "train", "test"), default="test", help=split_help)
    e.add_argument("--csv", required=True, type=Path)

    s = sub.add_parser("sweep", parents=[common], help="accuracy per SNR, length or frequency-offset bin")
    s.add_argument("--kind", required=True, choices=("snr", "length", "freq"))
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--split", choices=("all", "train", "test"), default="test", help=split_help)
    s.add_argument("--sign-split", action="store_true", help="separate bins for +/- offsets (freq only)")
    s.add_argument("--csv", required=True, type=Path)

    i = sub.add_parser("infer", parents=[common], help="classify one raw I/Q capture")
    i.add_argument("--checkpoint", required=True, type=Path)
    i.add_argument("--iq-file", required=True, type=Path, help="little-endian float32 interleaved I,Q")
    i.add_argument("--samples", type=int, default=None, help="use the first N samples (default: all)")
    i.add_argument("--no-normalize", action="store_true", help="skip unit-RMS normalization")

    n = sub.add_parser("inspect", parents=[common], help="summarize a dataset file")
    n.add_argument("dataset", type=Path)
    return p


def _log_run(args, **extra) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    logger.info("augmod %s, numpy %s, python %s", __version__, np.__version__, platform.python_version())
    logger.info("command %s: %s", args.command, resolved)
    for key, value in extra.items():
        logger.info("%s: %s", key, value)


def _dataset_digest(path: Path) -> str:
    return file_sha256(path)


def _pick_split(dataset, split: str):
    if split == "all":
        return dataset
    train, test = dataset.split_halves()
    return train if split == "train" else test


def cmd_generate(args) -> int:
    config = GenConfig(
        examples_per_pair=args.per_pair,
        n_samples=args.samples,
        master_seed=args.seed,
        freq_offset_enabled=args.freq_offset,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _log_run(args, master_seed=args.seed)
    result = generate_dataset(config, args.out, workers=max(1, args.threads or 1), deterministic=args.deterministic)
    logger.info("wrote %d examples to %s (sha256 %s), manifest %s",
                result.n_examples, result.path, result.sha256, result.manifest_path)
    return 0


def cmd_train(args) -> int:
    try:
        length = parse_length(args.length)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = TrainConfig(
        architecture=args.model.upper(),
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        length=length,
        master_seed=args.seed,
        init_checkpoint=str(args.init) if args.init else None,
        deterministic=args.deterministic,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = read_dataset(args.dataset)
    if args.test_dataset is not None:
        train, test = data, read_dataset(args.test_dataset)
    else:
        train, test = data.split_halves()
    _log_run(args, master_seed=args.seed, dataset_sha256=_dataset_digest(args.dataset), train_config=config.describe())
    try:
        model, history = fit(config, train, test)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    save_checkpoint(model, args.out)
    logger.info("saved checkpoint %s", args.out)
    if args.history is not None:
        history.to_csv(args.history)
        logger.info("wrote history %s", args.history)
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    dataset = _pick_split(read_dataset(args.dataset), args.split)
    _log_run(args, dataset_sha256=_dataset_digest(args.dataset), checkpoint_metadata=model.metadata)
    try:
        report = evalkit.evaluate(model, dataset, args.length)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    evalkit.emit_csv(report, args.csv)
    logger.info("accuracy %.4f on %d examples -> %s", report.accuracy, report.total, args.csv)
    return 0


def cmd_sweep(args) -> int:
    model = load_checkpoint(args.checkpoint)
    dataset = _pick_split(read_dataset(args.dataset), args.split)
    _log_run(args, dataset_sha256=_dataset_digest(args.dataset), checkpoint_metadata=model.metadata)
    try:
        if args.kind == "snr":
            report = evalkit.sweep_snr(model, dataset)
        elif args.kind == "length":
            report = evalkit.sweep_length(model, dataset)
        else:
            report = evalkit.sweep_freq_offset(model, dataset, split_sign=args.sign_split)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    evalkit.emit_csv(report, args.csv)
    for g in report.groups.values():
        logger.info("%s=%s: accuracy %.4f (%d examples)", args.kind, g.label, g.accuracy, g.count)
    return 0


def cmd_infer(args) -> int:
    model = load_checkpoint(args.checkpoint)
    _log_run(args, checkpoint_metadata=model.metadata)
    try:
        raw = np.fromfile(args.iq_file, dtype="<f4")
    except OSError as exc:
        raise DataError(f"cannot read {args.iq_file}: {exc}") from exc
    if raw.size % 2 or raw.size == 0:
        raise DataError(f"{args.iq_file}: expected a non-empty sequence of (I, Q) float32 pairs")
    iq = raw.reshape(-1, 2).astype(np.float64)
    n = args.samples or iq.shape[0]
    if not 1 <= n <= iq.shape[0]:
        raise DataError(f"{args.iq_file} holds {iq.shape[0]} samples, {n} requested")
    iq = iq[:n]
    if not np.all(np.isfinite(iq)):
        raise DataError(f"{args.iq_file}: non-finite samples")
    if not args.no_normalize:
        rms = np.sqrt(np.mean(np.sum(iq**2, axis=1)))
        if rms > 0:
            iq = iq / rms
    probs = model.forward(iq)[0]
    names = model.metadata.get("class_names") or [str(c) for c in range(model.config.n_classes)]
    for name, prob in zip(names, probs):
        print(f"{name}\t{prob:.6f}")
    return 0


def cmd_inspect(args) -> int:
    data = read_dataset(args.dataset)
    _log_run(args, master_seed=data.manifest.get("master_seed"), dataset_sha256=_dataset_digest(args.dataset))
    print(f"{len(data)} examples, {data.n_samples} samples, {data.n_classes} classes")
    snrs = sorted(np.unique(np.round(data.snr_db)).astype(int).tolist())
    print("counts per (class, SNR dB):")
    print("  " + "class".ljust(8) + "".join(f"{s:>8d}" for s in snrs))
    rounded = np.round(data.snr_db).astype(int)
    for c, name in enumerate(data.class_names):
        row = [int(np.sum((data.labels == c) & (rounded == s))) for s in snrs]
        print("  " + name.ljust(8) + "".join(f"{v:>8d}" for v in row))
    print("impairment ranges observed:")
    for field in PARAM_FIELDS:
        v = data.params[field].astype(np.float64)
        if field == "freq_offset":
            mag = np.abs(v[v != 0])
            extra = f" (|.| in [{mag.min():.3g}, {mag.max():.3g}])" if mag.size else " (disabled)"
        else:
            extra = ""
        lo, hi = (v.min(), v.max()) if v.size else (float("nan"), float("nan"))
        print(f"  {field:<15s} [{lo:.6g}, {hi:.6g}]{extra}")
    seed = data.manifest.get("master_seed", "unknown (no manifest)")
    print(f"manifest seed: {seed}")
    if not manifest_path_for(args.dataset).exists():
        logger.warning("no manifest next to %s", args.dataset)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "infer": cmd_infer,
    "inspect": cmd_inspect,
}


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else None


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        threads = _threads(args)
    except ValueError:
        print(f"augmod: error: {THREADS_ENV} must be an integer", file=sys.stderr)
        return 1
    if args.command == "generate" and threads is not None:
        args.threads = threads
    limit = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    try:
        with limit:
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"augmod {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, TrainingDivergedError) as exc:
        print(f"augmod {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
