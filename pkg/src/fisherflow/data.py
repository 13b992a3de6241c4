"""Dataset loading and generation, plus the metrics CSV format."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

if TYPE_CHECKING:
    from .training import MetricsRow

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

METRICS_HEADER = (
    "epoch",
    "step",
    "train_loss",
    "train_acc",
    "val_loss",
    "val_acc",
    "fisher_refreshes",
    "fisher_failures",
    "wall_time_s",
)


@dataclass
class Dataset:
    """Feature columns plus integer labels. x is (d, n): one sample per column."""

    x: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "all"

    @property
    def n(self) -> int:
        return self.x.shape[1]


def _read_idx(path) -> tuple[int, tuple[int, ...], np.ndarray]:
    """Parse one IDX file (gzipped or raw) into (magic, dims, flat ubyte payload)."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise ValueError(f"{path}: unrecognized IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise ValueError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = 1
    for d in dims:
        count *= int(d)
    payload = raw[header_end:]
    if len(payload) != count:
        raise ValueError(
            f"{path}: payload size mismatch: header promises {count} bytes, file has {len(payload)}"
        )
    return magic, dims, np.frombuffer(payload, dtype=np.uint8)


def load_idx(images_path, labels_path, split: str = "all") -> Dataset:
    """Load an IDX image/label file pair into [0, 1]-scaled feature columns.

    Images (big-endian magic 0x00000803, dims n/h/w) flatten row-major to
    h*w features per column, divided by 255. Labels (magic 0x00000801) become
    int64; num_classes is max label + 1.
    """
    magic_i, dims_i, raw_i = _read_idx(images_path)
    if magic_i != IMAGES_MAGIC:
        raise ValueError(f"{images_path}: not an images file (magic 0x{magic_i:08x})")
    magic_l, dims_l, raw_l = _read_idx(labels_path)
    if magic_l != LABELS_MAGIC:
        raise ValueError(f"{labels_path}: not a labels file (magic 0x{magic_l:08x})")
    n, h, w = (int(d) for d in dims_i)
    if int(dims_l[0]) != n:
        raise ValueError(f"image/label count mismatch: {n} images vs {int(dims_l[0])} labels")
    x = raw_i.astype(np.float64).reshape(n, h * w).T / 255.0
    labels = raw_l.astype(np.int64)
    num_classes = int(labels.max()) + 1 if n > 0 else 0
    return Dataset(x=x, labels=labels, num_classes=num_classes, split=split)


def split_train_val(dataset: Dataset, val_size: int, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministically split off a validation set by shuffled index.

    A permutation drawn from `seed` alone orders the samples; the last
    val_size shuffled indices become the validation split and the rest the
    training split (in shuffled order). The two splits are disjoint and
    exhaustive.
    """
    n = dataset.n
    if not 0 <= val_size < n:
        raise ValueError(f"val_size must be in [0, {n}), got {val_size}")
    perm = np.random.default_rng(seed).permutation(n)
    train_idx, val_idx = perm[: n - val_size], perm[n - val_size :]

    def take(idx: np.ndarray, name: str) -> Dataset:
        return Dataset(dataset.x[:, idx], dataset.labels[idx], dataset.num_classes, name)

    return take(train_idx, "train"), take(val_idx, "val")


def gen_blobs(
    seed: int,
    n_per_class: int = 100,
    d: int = 2,
    num_classes: int = 2,
    separation: float = 6.0,
) -> Dataset:
    """Seeded Gaussian blobs: unit-variance classes with means `separation` apart.

    Class means sit on scaled axis directions so each pair of means is
    exactly `separation` apart while num_classes <= d (axes are cycled with
    a growing offset beyond that). Columns are shuffled so labels interleave.
    """
    if num_classes < 2 or n_per_class < 1 or d < 1 or separation < 0:
        raise ValueError("need num_classes >= 2, n_per_class >= 1, d >= 1, separation >= 0")
    rng = np.random.default_rng(seed)
    means = np.zeros((d, num_classes))
    for c in range(num_classes):
        means[c % d, c] = separation * (1.0 + c // d) / np.sqrt(2.0)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    x = rng.standard_normal((d, labels.size)) + means[:, labels]
    order = rng.permutation(labels.size)
    return Dataset(x=x[:, order], labels=labels[order].astype(np.int64), num_classes=num_classes, split="train")


def _real(value: float) -> str:
    # 17 significant digits: parsing the text reproduces the double exactly.
    return format(float(value), ".17g")


def write_metrics(rows: Iterable["MetricsRow"], path) -> None:
    """Write MetricsRow records as a CSV with full round-trip float precision.

    The header is always present; reals carry 17 significant digits so a
    parse reproduces the stored values exactly, and rerunning an identical
    seeded configuration reproduces the file byte for byte.
    """
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.epoch,
                    row.step,
                    _real(row.train_loss),
                    _real(row.train_acc),
                    _real(row.val_loss),
                    _real(row.val_acc),
                    row.fisher_refreshes,
                    row.fisher_failures,
                    _real(row.wall_time_s),
                ]
            )
