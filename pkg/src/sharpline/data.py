"""Seeded synthetic tasks, two-task mixtures, and small-file ingestion.

Every generator is a pure function of (spec, seed, example index): asking for
the same index range twice returns bit-identical batches, so probe batches
and streams are reproducible across runs and processes.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DatasetParseError
from .model import Batch

TASK_KINDS = ("gaussian-mixture-classify", "linear-regression", "rotated-variant")


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "gaussian-mixture-classify"
    dim: int = 8
    n_classes: int = 2
    separation: float = 2.0
    noise: float = 1.0
    rotation: float = 0.0   # label-function rotation angle (rotated-variant)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.dim < 1 or self.n_classes < 1:
            raise ValueError("dim and n_classes must be >= 1")
        if self.kind != "linear-regression" and self.n_classes > self.dim:
            raise ValueError("need dim >= n_classes (class centers are axis-aligned)")
        if self.separation < 0 or self.noise < 0:
            raise ValueError("separation and noise must be nonnegative")


@dataclass(frozen=True)
class MixSpec:
    task_a: TaskSpec
    task_b: TaskSpec
    ratio: float            # fraction of task-A examples per batch
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.ratio <= 1.0):
            raise ValueError("ratio must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def a_count(self) -> int:
        # round half-up so logs are reproducible across platforms
        return int(math.floor(self.ratio * self.batch_size + 0.5))


def _example_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng((seed, index))


def _regression_weights(spec: TaskSpec) -> np.ndarray:
    rng = np.random.default_rng((spec.seed, 0x57A7))
    return rng.standard_normal((spec.dim, spec.n_classes))


def _rotated_label(x: np.ndarray, spec: TaskSpec) -> int:
    c = spec.n_classes
    head = x[:c]
    rotated = math.cos(spec.rotation) * head + math.sin(spec.rotation) * np.roll(head, -1)
    return int(np.argmax(rotated))


def generate(spec: TaskSpec, start: int, count: int,
             batch_id: int = 0, tag: str = "A") -> Batch:
    """Deterministic batch of `count` examples starting at index `start`."""
    if count < 1:
        raise ValueError("count must be >= 1")
    inputs = np.empty((count, spec.dim))
    if spec.kind == "linear-regression":
        weights = _regression_weights(spec)
        targets = np.empty((count, spec.n_classes))
        for row, idx in enumerate(range(start, start + count)):
            rng = _example_rng(spec.seed, idx)
            x = rng.standard_normal(spec.dim)
            inputs[row] = x
            targets[row] = x @ weights + spec.noise * rng.standard_normal(spec.n_classes)
    else:
        labels = np.empty(count, dtype=np.int64)
        for row, idx in enumerate(range(start, start + count)):
            rng = _example_rng(spec.seed, idx)
            cls = idx % spec.n_classes
            x = spec.noise * rng.standard_normal(spec.dim)
            x[cls] += spec.separation
            inputs[row] = x
            if spec.kind == "rotated-variant":
                labels[row] = _rotated_label(x, spec)
            else:
                labels[row] = cls
        targets = labels
    tags = np.array([tag] * count)
    return Batch(inputs, targets, batch_id=batch_id, source_tags=tags)


def mix_batch(mix: MixSpec, step: int) -> Batch:
    """Batch `step` of the mixture stream: exactly round(ratio * batch_size)
    task-A examples, the rest task-B, shuffled by a seeded permutation."""
    n_a = mix.a_count
    n_b = mix.batch_size - n_a
    start = step * mix.batch_size
    parts = []
    if n_a:
        parts.append(generate(mix.task_a, start, n_a, tag="A"))
    if n_b:
        parts.append(generate(mix.task_b, start, n_b, tag="B"))
    inputs = np.concatenate([p.inputs for p in parts])
    targets = np.concatenate([p.targets for p in parts])
    tags = np.concatenate([p.source_tags for p in parts])
    perm = np.random.default_rng((mix.seed, step)).permutation(mix.batch_size)
    return Batch(inputs[perm], targets[perm], batch_id=step, source_tags=tags[perm])


@dataclass
class FileDataset:
    """In-memory dataset exposing generate-compatible batching (modulo size)."""

    inputs: np.ndarray
    targets: np.ndarray
    path: str = ""

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def batch(self, start: int, count: int, batch_id: int = 0) -> Batch:
        if count < 1:
            raise ValueError("count must be >= 1")
        idx = (start + np.arange(count)) % self.size
        return Batch(self.inputs[idx], self.targets[idx], batch_id=batch_id)


def _ingest_csv(path: str) -> FileDataset:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                if lineno == 1:  # optional header
                    continue
                raise DatasetParseError(
                    f"{path}: line {lineno}: non-numeric cell in {row!r}")
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise DatasetParseError(
                    f"{path}: line {lineno}: expected {len(rows[0])} columns, "
                    f"got {len(rows[-1])}")
    if not rows:
        raise DatasetParseError(f"{path}: no data rows")
    if len(rows[0]) < 2:
        raise DatasetParseError(f"{path}: need at least one feature column plus label")
    data = np.asarray(rows)
    labels = data[:, -1]
    if np.allclose(labels, np.round(labels)):
        labels = labels.astype(np.int64)
    return FileDataset(data[:, :-1], labels, path=path)


def _read_idx(path: str) -> np.ndarray:
    dtype_codes = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2",
                   0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if len(magic) < 4 or magic[0] != 0 or magic[1] != 0:
            raise DatasetParseError(f"{path}: offset 0: bad magic number {magic!r}")
        code, ndim = magic[2], magic[3]
        if code not in dtype_codes:
            raise DatasetParseError(f"{path}: offset 2: unknown dtype code {code:#x}")
        dims_raw = fh.read(4 * ndim)
        if len(dims_raw) != 4 * ndim:
            raise DatasetParseError(f"{path}: truncated dimension header")
        dims = struct.unpack(f">{ndim}I", dims_raw)
        data = np.frombuffer(fh.read(), dtype=dtype_codes[code])
        expected = int(np.prod(dims)) if dims else 0
        if data.size != expected:
            raise DatasetParseError(
                f"{path}: payload has {data.size} items, header promises {expected}")
    return data.reshape(dims).astype(np.float64)


def _ingest_idx_pair(path: str) -> FileDataset:
    if "," not in path:
        raise DatasetParseError(
            "idx-pair path must be '<images-file>,<labels-file>'")
    images_path, labels_path = (p.strip() for p in path.split(",", 1))
    images = _read_idx(images_path)
    labels = _read_idx(labels_path)
    if labels.ndim != 1:
        raise DatasetParseError(f"{labels_path}: labels must be 1-D")
    if images.shape[0] != labels.shape[0]:
        raise DatasetParseError(
            f"idx pair mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    flat = images.reshape(images.shape[0], -1)
    return FileDataset(flat, labels.astype(np.int64), path=path)


def ingest(path: str, fmt: str) -> FileDataset:
    """Load 'csv-labeled' (last column = label, optional header) or 'idx-pair'
    ('<images>,<labels>' big-endian IDX files)."""
    if fmt == "csv-labeled":
        return _ingest_csv(path)
    if fmt == "idx-pair":
        return _ingest_idx_pair(path)
    raise ValueError(f"unknown dataset format {fmt!r}")
