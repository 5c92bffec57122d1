"""Dataset ingestion: MNIST IDX files, synthetic blobs, CSV round-trip.

A :class:`Dataset` holds normalized inputs in [0,1], integer labels, and a
split tag (train/validation/test) per sample. Loaders are pure; datasets are
immutable after construction.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

TRAIN = "train"
VALIDATION = "validation"
TEST = "test"
_SPLITS = (TRAIN, VALIDATION, TEST)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledSample:
    input: np.ndarray
    label: int


class Dataset:
    def __init__(self, inputs: np.ndarray, labels: np.ndarray, splits):
        inputs = np.asarray(inputs, dtype=float)
        labels = np.asarray(labels, dtype=int)
        splits = np.asarray(splits, dtype=object)
        if inputs.ndim != 2:
            raise DataFormatError("inputs must be a 2-D array (n, dim)")
        n = inputs.shape[0]
        if labels.shape != (n,) or splits.shape != (n,):
            raise DataFormatError("inputs, labels and splits must align")
        bad = [s for s in np.unique(splits) if s not in _SPLITS]
        if bad:
            raise DataFormatError(f"unknown split tags {bad}")
        if not np.all(np.isfinite(inputs)):
            raise DataFormatError("inputs must be finite")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        splits.setflags(write=False)
        self.inputs = inputs
        self.labels = labels
        self.splits = splits

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def split(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        """(inputs, labels) of one split."""
        if tag not in _SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        mask = self.splits == tag
        return self.inputs[mask], self.labels[mask]

    def samples(self, tag: str) -> list[LabeledSample]:
        xs, ys = self.split(tag)
        return [LabeledSample(x, int(y)) for x, y in zip(xs, ys)]

    def counts(self) -> dict[str, int]:
        return {tag: int(np.sum(self.splits == tag)) for tag in _SPLITS}


def _read_exact(fh, n: int, path: str, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataFormatError(
            f"{path}: truncated {what} at offset {fh.tell() - len(data)}: "
            f"wanted {n} bytes, got {len(data)}"
        )
    return data


def _read_idx(path: str, expected_magic: int):
    """Parse one big-endian IDX file into a uint8 array."""
    with open(path, "rb") as fh:
        magic = struct.unpack(">I", _read_exact(fh, 4, path, "magic"))[0]
        if magic != expected_magic:
            raise DataFormatError(
                f"{path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{expected_magic:08x}"
            )
        n_dims = magic & 0xFF
        dims = [
            struct.unpack(">I", _read_exact(fh, 4, path, f"dim {d}"))[0]
            for d in range(n_dims)
        ]
        count = int(np.prod(dims, dtype=np.int64))
        payload = _read_exact(fh, count, path, "payload")
        extra = fh.read(1)
        if extra:
            raise DataFormatError(f"{path}: trailing bytes at offset {fh.tell() - 1}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist(images_path: str, labels_path: str, paper_split: bool = False) -> Dataset:
    """Load an MNIST-style IDX image/label pair, pixels scaled into [0,1].

    With ``paper_split`` the first 400 items are kept: items 0-199 become the
    validation split and 200-399 the test split. Otherwise every item is
    tagged test.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images_path} has {images.shape[0]} images, "
            f"{labels_path} has {labels.shape[0]} labels"
        )
    inputs = images.reshape(images.shape[0], -1).astype(float) / 255.0
    ys = labels.astype(int)
    if paper_split:
        if len(inputs) < 400:
            raise DataFormatError(
                f"paper split needs at least 400 items, file has {len(inputs)}"
            )
        inputs, ys = inputs[:400], ys[:400]
        splits = np.array([VALIDATION] * 200 + [TEST] * 200, dtype=object)
    else:
        splits = np.array([TEST] * len(inputs), dtype=object)
    return Dataset(inputs, ys, splits)


def split_counts(n: int) -> tuple[int, int, int]:
    """60/20/20 split sizes; remainder goes to the test split."""
    n_train = (n * 6) // 10
    n_val = (n * 2) // 10
    return n_train, n_val, n - n_train - n_val


def synth_blobs(n: int, dim: int, classes: int, seed: int, spread: float = 0.08) -> Dataset:
    """Gaussian class clusters clipped to [0,1]^dim with a 60/20/20 split.

    Deterministic per seed. Class centers are drawn away from the box border
    and rejected until pairwise separated, so small fixtures stay learnable.
    """
    if n < classes:
        raise ValueError(f"need at least one sample per class, n={n} classes={classes}")
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        centers = rng.uniform(0.2, 0.8, size=(classes, dim))
        dists = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
        if classes == 1 or dists[~np.eye(classes, dtype=bool)].min() > 0.45:
            break
    labels = np.arange(n) % classes
    points = centers[labels] + rng.normal(0.0, spread, size=(n, dim))
    points = np.clip(points, 0.0, 1.0)
    n_train, n_val, n_test = split_counts(n)
    splits = np.array(
        [TRAIN] * n_train + [VALIDATION] * n_val + [TEST] * n_test, dtype=object
    )
    return Dataset(points, labels, splits)


def save_csv(dataset: Dataset, path: str, split: str | None = None) -> None:
    """Export as ``label,v0,v1,...`` rows (one split or the whole set)."""
    if split is None:
        xs, ys = dataset.inputs, dataset.labels
    else:
        xs, ys = dataset.split(split)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"v{i}" for i in range(dataset.dim)])
        for x, y in zip(xs, ys):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])
    os.replace(tmp, path)


def load_csv(path: str, split: str = TEST) -> Dataset:
    """Read a ``label,v0,v1,...`` file back; all samples get one split tag."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "label":
        raise DataFormatError(f"{path}: expected 'label,v0,...' header row")
    dim = len(rows[0]) - 1
    xs, ys = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise DataFormatError(f"{path}:{i}: expected {dim + 1} fields, got {len(row)}")
        try:
            ys.append(int(row[0]))
            xs.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{i}: {exc}") from exc
    if not xs:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(xs), np.array(ys), np.array([split] * len(xs), dtype=object))
