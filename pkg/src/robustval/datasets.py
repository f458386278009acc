"""Tabular datasets for desk-scale valuation experiments."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParam
from .subsets import SubsetKey


@dataclass
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise InvalidParam(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidParam(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} rows"
            )
        if self.n_points < 1:
            raise InvalidParam("dataset must contain at least one row")
        if self.labels.min(initial=0) < 0:
            raise InvalidParam("class ids must be non-negative")

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n_points else 0

    def rows(self, which: SubsetKey | Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        idx = list(which.members) if isinstance(which, SubsetKey) else list(which)
        return self.features[idx], self.labels[idx]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()[:16]


def synthetic_gaussian_dataset(
    n_points: int,
    seed: int,
    *,
    validation_size: int = 200,
    mean: tuple[float, float] = (0.1, -0.1),
) -> tuple[TabularDataset, TabularDataset]:
    """Bivariate Gaussian points labelled by the sign of the feature sum.

    Returns a training split of ``n_points`` rows and an i.i.d. validation
    split (200 rows by default) from the same law: features
    ``N(mean, I_2)``, label 1 when the two features sum to a positive
    number, else 0.
    """
    if n_points < 2:
        raise InvalidParam(f"need at least 2 training points, got {n_points}")
    if validation_size < 1:
        raise InvalidParam(f"need a non-empty validation split, got {validation_size}")
    rng = np.random.default_rng(seed)
    mu = np.asarray(mean, dtype=float)

    def draw(count: int, split: str) -> TabularDataset:
        feats = rng.standard_normal((count, 2)) + mu
        labels = (feats.sum(axis=1) > 0).astype(int)
        return TabularDataset(feats, labels, split=split)

    return draw(n_points, "train"), draw(validation_size, "validation")


def flip_labels(
    dataset: TabularDataset, fraction: float, seed: int
) -> tuple[TabularDataset, tuple[int, ...]]:
    """Corrupt floor(fraction * n) uniformly chosen rows.

    Each chosen row's label is redrawn uniformly from the other classes
    (the complement, for binary labels).  Returns the corrupted copy and
    the ground-truth flipped index set.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidParam(f"fraction must be in [0, 1], got {fraction}")
    n = dataset.n_points
    count = int(fraction * n)
    labels = dataset.labels.copy()
    if count == 0:
        return (
            TabularDataset(dataset.features.copy(), labels, split=dataset.split),
            (),
        )
    rng = np.random.default_rng(seed)
    flipped = np.sort(rng.choice(n, size=count, replace=False))
    classes = max(dataset.num_classes, 2)
    for idx in flipped:
        others = [c for c in range(classes) if c != labels[idx]]
        labels[idx] = others[rng.integers(len(others))]
    return (
        TabularDataset(dataset.features.copy(), labels, split=dataset.split),
        tuple(int(i) for i in flipped),
    )


def load_csv(path: str | Path, *, split: str = "train") -> TabularDataset:
    """Read a dataset from CSV: header row, last column is the class id."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidParam(f"{path} is empty") from None
        if len(header) < 2:
            raise InvalidParam(f"{path} needs at least one feature column plus a label")
        feats: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                feats.append([float(x) for x in row[:-1]])
                labels.append(int(float(row[-1])))
            except ValueError as exc:
                raise InvalidParam(f"{path}:{lineno}: unparseable row {row!r}") from exc
    if not feats:
        raise InvalidParam(f"{path} contains a header but no data rows")
    return TabularDataset(np.asarray(feats), np.asarray(labels), split=split)
