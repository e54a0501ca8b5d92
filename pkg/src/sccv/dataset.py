"""Labeled window datasets on disk.

A dataset is a directory of flat, byte-reproducible files:

    X.npy       float64 (N, W, D), rows L1-normalized
    y.npy       int64 (N,), window labels, indices into labels.txt
    labels.txt  one class name per line, index = line number
    meta.json   {"interval_ns": ..., "window": ..., "dim": ...}, sorted keys

Plain .npy files rather than an .npz archive: zip headers embed
timestamps, which would break byte-for-byte reproducibility.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import NormalizedSequence


class DatasetError(RuntimeError):
    """Missing or inconsistent dataset files."""


@dataclass
class SequenceDataset:
    """In-memory view of a labeled window dataset."""

    X: np.ndarray  # (N, W, D) float64
    y: np.ndarray  # (N,) int64
    class_names: list[str]
    interval_ns: int

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 3:
            raise DatasetError(f"X must be (N, W, D), got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DatasetError("y must hold one label per window")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.class_names)):
            raise DatasetError("labels out of range for class_names")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def window(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Flatten to per-row samples for the logistic baseline.

        Every row inherits its window's label.
        """
        N, W, D = self.X.shape
        return self.X.reshape(N * W, D), np.repeat(self.y, W)

    def sequences(self) -> Iterator[NormalizedSequence]:
        """Windows as NormalizedSequence values (synthetic provenance)."""
        t = self.interval_ns
        for i in range(len(self)):
            name = self.class_names[int(self.y[i])]
            yield NormalizedSequence(rows=self.X[i], label=int(self.y[i]),
                                     scale=1, host_id="dataset", pid=i,
                                     declared_name=name,
                                     interval_start=i * self.window * t,
                                     interval_len=t)

    def subset(self, idx: np.ndarray) -> "SequenceDataset":
        return SequenceDataset(self.X[idx], self.y[idx], list(self.class_names),
                               self.interval_ns)


def save_dataset(path: str | Path, ds: SequenceDataset) -> None:
    """Write the dataset directory, creating it if needed."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    np.save(root / "X.npy", np.ascontiguousarray(ds.X, dtype=np.float64))
    np.save(root / "y.npy", np.ascontiguousarray(ds.y, dtype=np.int64))
    (root / "labels.txt").write_text(
        "".join(name + "\n" for name in ds.class_names), encoding="utf-8")
    meta = {"dim": int(ds.dim), "interval_ns": int(ds.interval_ns),
            "window": int(ds.window)}
    (root / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n",
                                    encoding="utf-8")


def load_dataset(path: str | Path) -> SequenceDataset:
    root = Path(path)
    for fname in ("X.npy", "y.npy", "labels.txt", "meta.json"):
        if not (root / fname).is_file():
            raise DatasetError(f"dataset at {root} is missing {fname}")
    X = np.load(root / "X.npy")
    y = np.load(root / "y.npy")
    names = (root / "labels.txt").read_text(encoding="utf-8").splitlines()
    names = [n for n in names if n]
    try:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
        interval_ns = int(meta["interval_ns"])
        window = int(meta["window"])
        dim = int(meta["dim"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"bad meta.json in {root}: {exc}") from exc
    ds = SequenceDataset(X, y, names, interval_ns)
    if ds.window != window or ds.dim != dim:
        raise DatasetError(f"meta.json disagrees with X.npy shape in {root}")
    return ds
