"""Synthetic classification task and dataset files.

The work function needs a task whose accuracy keeps improving with compute.
We use Gaussian blobs: class c is centred on a circle of radius
`center_radius` at angle 2*pi*c/C (extra feature dimensions are centred at
zero), with isotropic noise of scale `noise`. Labels are assigned
round-robin, so class counts per set differ by at most one.

Generation draws from counter streams, one stream per dataset, and is
deterministic for a given (seed, shape) on a given platform; the canonical
files written here are the cross-machine interchange format, and a
dataset's identity is the digest of its canonical bytes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..errors import DumpCorrupt, EmptyDataset
from ..hashing import Digest, hash_bytes
from .rng import uniform_stream

DATASET_MAGIC = b"TCD1"


class Record(NamedTuple):
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    X: np.ndarray  # (n, input_dim) float64
    y: np.ndarray  # (n,) int64
    input_dim: int
    num_classes: int

    def __post_init__(self) -> None:
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or len(self.X) == 0:
            raise EmptyDataset("dataset must contain at least one record")
        if self.X.shape != (len(self.y), self.input_dim):
            raise ValueError("feature matrix does not match input_dim")
        if self.y.min() < 0 or self.y.max() >= self.num_classes:
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def records(self) -> list[Record]:
        return [Record(self.X[i], int(self.y[i])) for i in range(len(self))]

    def serialize(self) -> bytes:
        head = DATASET_MAGIC + struct.pack("<III", len(self), self.input_dim, self.num_classes)
        body = bytearray()
        for i in range(len(self)):
            body += self.X[i].astype("<f8", copy=False).tobytes()
            body += struct.pack("<I", int(self.y[i]))
        return head + bytes(body)

    @property
    def dataset_id(self) -> Digest:
        return hash_bytes(self.serialize())

    def slice(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.X[start:stop].copy(), self.y[start:stop].copy(), self.input_dim, self.num_classes)


def _gaussians(seed: int, tag: int, n: int) -> np.ndarray:
    """n standard normals via Box-Muller (cosine branch) from two streams."""
    u1 = 1.0 - uniform_stream(seed, tag * 2, n)  # (0, 1]: keeps log finite
    u2 = uniform_stream(seed, tag * 2 + 1, n)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


def _blob_dataset(
    seed: int, tag: int, n: int, input_dim: int, num_classes: int, center_radius: float, noise: float
) -> Dataset:
    centers = np.zeros((num_classes, input_dim))
    for c in range(num_classes):
        angle = 2.0 * math.pi * c / num_classes
        centers[c, 0] = center_radius * math.cos(angle)
        if input_dim > 1:
            centers[c, 1] = center_radius * math.sin(angle)
    y = np.arange(n, dtype=np.int64) % num_classes
    g = _gaussians(seed, tag, n * input_dim).reshape(n, input_dim)
    X = centers[y] + noise * g
    return Dataset(X, y, input_dim, num_classes)


def generate_task(
    task_seed: int,
    n_train: int,
    n_test_per_block: int,
    blocks: int,
    *,
    input_dim: int = 2,
    num_classes: int = 4,
    center_radius: float = 3.0,
    noise: float = 1.0,
) -> tuple[Dataset, list[Dataset]]:
    """One training set plus `blocks` fresh test sets from one distribution.

    The training set is reused for every block; each block gets its own
    disjoint test set (distinct stream tags make record collisions
    probability-zero draws from a continuous distribution).
    """
    if n_train <= 0 or n_test_per_block <= 0 or blocks <= 0:
        raise ValueError("sizes must be positive")
    train = _blob_dataset(task_seed, 1, n_train, input_dim, num_classes, center_radius, noise)
    tests = [
        _blob_dataset(task_seed, 2 + b, n_test_per_block, input_dim, num_classes, center_radius, noise)
        for b in range(blocks)
    ]
    return train, tests


def save_dataset(ds: Dataset, path_prefix: Path) -> tuple[Path, Path]:
    """Write `<prefix>.csv` (features..., label) and a `<prefix>.json` sidecar."""
    csv_path = path_prefix.with_suffix(".csv")
    json_path = path_prefix.with_suffix(".json")
    with open(csv_path, "w") as fh:
        for i in range(len(ds)):
            fields = [repr(float(v)) for v in ds.X[i]] + [str(int(ds.y[i]))]
            fh.write(",".join(fields) + "\n")
    sidecar = {
        "input_dim": ds.input_dim,
        "num_classes": ds.num_classes,
        "n_records": len(ds),
        "dataset_id": ds.dataset_id.hex(),
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def load_dataset(path_prefix: Path) -> Dataset:
    """Read a CSV + sidecar pair and check the content hash."""
    csv_path = path_prefix.with_suffix(".csv")
    json_path = path_prefix.with_suffix(".json")
    with open(json_path) as fh:
        sidecar = json.load(fh)
    rows_x: list[list[float]] = []
    rows_y: list[int] = []
    with open(csv_path) as fh:
        for line in fh:
            parts = line.strip().split(",")
            rows_x.append([float(v) for v in parts[:-1]])
            rows_y.append(int(parts[-1]))
    ds = Dataset(
        np.array(rows_x),
        np.array(rows_y, dtype=np.int64),
        int(sidecar["input_dim"]),
        int(sidecar["num_classes"]),
    )
    if ds.dataset_id.hex() != sidecar["dataset_id"]:
        raise DumpCorrupt(f"dataset bytes do not match sidecar id for {path_prefix}")
    return ds
