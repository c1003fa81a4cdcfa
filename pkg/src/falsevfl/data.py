"""Vertically partitioned datasets, availability records, and on-disk formats.

A dataset of N samples is split column-wise into K feature blocks, one per
party. Availability is tracked per sample: m is a K-vector with m[k] = 1
meaning party k's block is MISSING for that sample, and u = 1 meaning the
label is missing. At least one block is always present.

Dataset CSV: header row `f0,...,f{d-1}[,label]`, features in party order,
floats as full-precision decimal text (round-trips bit-exactly).
Mask CSV: header row `m1,...,mK,u`, entries 0/1.
Normalization stats JSON: {"format_version": 1, "mean": [...], "std": [...]}.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, FormatError

STATS_FORMAT_VERSION = 1
STD_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# availability

class AlignmentClass(Enum):
    FULLY_ALIGNED = "fully_aligned"
    PARTIALLY_ALIGNED = "partially_aligned"
    FULLY_UNALIGNED = "fully_unaligned"


@dataclass(frozen=True)
class AvailabilityRecord:
    """Per-sample availability: m[k] = 1 means party k missing, u = 1 means label missing."""

    m: tuple
    u: int

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.m) or self.u not in (0, 1):
            raise ConfigurationError("availability entries must be 0 or 1")
        if sum(self.m) >= len(self.m):
            raise ConfigurationError("a sample must have at least one observed block")


def observed_parties(rec: AvailabilityRecord) -> tuple:
    """Indices of observed parties, ascending."""
    return tuple(k for k, v in enumerate(rec.m) if v == 0)


def alignment_class(rec: AvailabilityRecord, num_parties: int) -> AlignmentClass:
    if len(rec.m) != num_parties:
        raise ConfigurationError(f"record has {len(rec.m)} parties, expected {num_parties}")
    missing = sum(rec.m)
    if missing == 0:
        return AlignmentClass.FULLY_ALIGNED
    if missing == num_parties - 1:
        return AlignmentClass.FULLY_UNALIGNED
    return AlignmentClass.PARTIALLY_ALIGNED


# ---------------------------------------------------------------------------
# dataset

@dataclass
class PartitionedDataset:
    blocks: list  # list of (N, d_k) float64 arrays
    labels: object = None  # (N,) int64 array or None
    num_classes: int = 0

    def __post_init__(self):
        if not self.blocks:
            raise ConfigurationError("at least one party block required")
        self.blocks = [np.asarray(b, dtype=np.float64) for b in self.blocks]
        n = self.blocks[0].shape[0]
        for k, b in enumerate(self.blocks):
            if b.ndim != 2:
                raise ConfigurationError(f"block {k} must be 2-d")
            if b.shape[0] != n:
                raise ConfigurationError("all blocks must have the same number of rows")
            if b.shape[1] == 0:
                raise ConfigurationError(f"block {k} has zero features")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise ConfigurationError("labels must be a vector of length N")
            if self.num_classes <= 0:
                raise ConfigurationError("num_classes must be positive when labels are present")
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise ConfigurationError("labels must lie in [0, num_classes)")

    @property
    def num_parties(self) -> int:
        return len(self.blocks)

    @property
    def num_samples(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def party_dims(self) -> tuple:
        return tuple(b.shape[1] for b in self.blocks)

    def feature_matrix(self) -> np.ndarray:
        return np.concatenate(self.blocks, axis=1)

    def subset(self, idx) -> "PartitionedDataset":
        idx = np.asarray(idx)
        return PartitionedDataset(
            [b[idx] for b in self.blocks],
            None if self.labels is None else self.labels[idx],
            self.num_classes,
        )


def from_matrix(x, party_dims, labels=None, num_classes: int = 0) -> PartitionedDataset:
    x = np.asarray(x, dtype=np.float64)
    party_dims = tuple(int(d) for d in party_dims)
    if x.ndim != 2 or x.shape[1] != sum(party_dims):
        raise ConfigurationError(
            f"feature matrix has {x.shape[1] if x.ndim == 2 else '?'} columns, party dims sum to {sum(party_dims)}"
        )
    offsets = np.cumsum((0,) + party_dims)
    blocks = [x[:, offsets[k]:offsets[k + 1]] for k in range(len(party_dims))]
    return PartitionedDataset(blocks, labels, num_classes)


# ---------------------------------------------------------------------------
# per-sample views

@dataclass(frozen=True)
class SampleView:
    """One sample as the model sees it: observed blocks only."""

    index: int
    observed: tuple  # ascending party indices
    features: tuple  # (d_k,) arrays aligned with `observed`
    mask: tuple  # the full m vector
    label: object = None  # int or None


def observed_view(ds: PartitionedDataset, i: int, rec: AvailabilityRecord):
    """[(party index, feature vector), ...] for observed parties, ascending."""
    if len(rec.m) != ds.num_parties:
        raise ConfigurationError("record party count does not match dataset")
    return [(k, ds.blocks[k][i]) for k in observed_parties(rec)]


def sample_view(ds: PartitionedDataset, i: int, rec: AvailabilityRecord) -> SampleView:
    pairs = observed_view(ds, i, rec)
    label = None
    if rec.u == 0:
        if ds.labels is None:
            raise ConfigurationError("record marks a label present but the dataset has none")
        label = int(ds.labels[i])
    return SampleView(
        index=i,
        observed=tuple(k for k, _ in pairs),
        features=tuple(v for _, v in pairs),
        mask=tuple(rec.m),
        label=label,
    )


# ---------------------------------------------------------------------------
# normalization

@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray


def zscore_normalize(ds: PartitionedDataset):
    """Column-wise z-score over the full feature matrix; returns (ds', stats)."""
    x = ds.feature_matrix()
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.maximum(std, STD_FLOOR)
    stats = FeatureStats(mean=mean, std=std)
    return apply_normalization(ds, stats), stats


def apply_normalization(ds: PartitionedDataset, stats: FeatureStats) -> PartitionedDataset:
    x = ds.feature_matrix()
    if stats.mean.shape[0] != x.shape[1]:
        raise ConfigurationError("stats dimension does not match dataset")
    z = (x - stats.mean) / stats.std
    return from_matrix(z, ds.party_dims, ds.labels, ds.num_classes)


def save_stats(stats: FeatureStats, path) -> None:
    payload = {
        "format_version": STATS_FORMAT_VERSION,
        "mean": [float(v) for v in stats.mean],
        "std": [float(v) for v in stats.std],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_stats(path) -> FeatureStats:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != STATS_FORMAT_VERSION:
        raise FormatError(f"unsupported stats format_version {payload.get('format_version')!r}")
    return FeatureStats(
        mean=np.asarray(payload["mean"], dtype=np.float64),
        std=np.asarray(payload["std"], dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# dataset CSV

def save_csv(ds: PartitionedDataset, path, label_column: str = "label") -> None:
    x = ds.feature_matrix()
    header = [f"f{j}" for j in range(x.shape[1])]
    if ds.labels is not None:
        header.append(label_column)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.num_samples):
            row = [repr(float(v)) for v in x[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def load_csv(path, party_dims, label_column: str = "label") -> PartitionedDataset:
    """Feature columns in party order, then an optional label column."""
    party_dims = tuple(int(d) for d in party_dims)
    d = sum(party_dims)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty dataset file") from None
        has_label = len(header) == d + 1 and header[-1] == label_column
        if not has_label and len(header) != d:
            raise FormatError(
                f"header has {len(header)} columns, expected {d} features"
                f" plus optional {label_column!r}"
            )
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:d]])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: non-numeric feature value ({exc})") from None
            if has_label:
                try:
                    labels.append(int(row[d]))
                except ValueError:
                    raise FormatError(f"line {lineno}: non-integer label {row[d]!r}") from None
    if not rows:
        raise FormatError("dataset file has no samples")
    x = np.asarray(rows, dtype=np.float64)
    if has_label:
        lab = np.asarray(labels, dtype=np.int64)
        if lab.min() < 0:
            raise FormatError("labels must be non-negative integers")
        return from_matrix(x, party_dims, lab, int(lab.max()) + 1)
    return from_matrix(x, party_dims)
