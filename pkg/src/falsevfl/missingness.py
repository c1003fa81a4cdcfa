"""Blockwise missingness generators (MCAR, two MAR variants, MNAR).

All generators draw each sample's mask from an independent substream keyed
by the sample index, so generation order and parallelism never change the
result. Masks marking every block missing are never emitted: MCAR and MNAR
rejection-resample the whole sample, the MAR visit algorithms observe at
least the first visited piece by construction.

Mask CSV format: header `m1,...,mK,u`, one 0/1 row per sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import AlignmentClass, AvailabilityRecord, PartitionedDataset, alignment_class
from .errors import ConfigurationError, FormatError
from .rng import RngStream

_MAX_RESAMPLE = 10000


@dataclass(frozen=True)
class MechanismSpec:
    kind: str  # mcar | mar1 | mar2 | mnar
    p: float = 0.0
    threshold: float = 0.0
    budget: float = 0.0
    decrement: float = 0.0

    def __post_init__(self):
        if self.kind not in ("mcar", "mar1", "mar2", "mnar"):
            raise ConfigurationError(f"unknown mechanism kind {self.kind!r}")
        if self.kind == "mcar" and not 0.0 <= self.p < 1.0:
            raise ConfigurationError("mcar drop probability must be in [0, 1)")
        if self.kind == "mnar" and not 0.0 < self.p < 1.0:
            raise ConfigurationError("mnar probability must be in (0, 1)")

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("mcar", "mnar"):
            out["p"] = self.p
        if self.kind in ("mar1", "mar2"):
            out["threshold"] = self.threshold
            out["decrement"] = self.decrement
        if self.kind == "mar2":
            out["budget"] = self.budget
        return out


MECHANISM_ALIASES = {
    "mcar0": MechanismSpec("mcar", p=0.0),
    "mcar2": MechanismSpec("mcar", p=0.2),
    "mcar5": MechanismSpec("mcar", p=0.5),
    "mar1": MechanismSpec("mar1", threshold=1.1, decrement=0.15),
    "mar2": MechanismSpec("mar2", threshold=0.5, budget=0.7, decrement=0.15),
    "mnar7": MechanismSpec("mnar", p=0.7),
    "mnar9": MechanismSpec("mnar", p=0.9),
}


def mechanism_from_name(name: str) -> MechanismSpec:
    try:
        return MECHANISM_ALIASES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown mechanism {name!r}; known: {', '.join(sorted(MECHANISM_ALIASES))}"
        ) from None


@dataclass
class MaskSet:
    records: list  # list[AvailabilityRecord], one per sample
    provenance: dict = field(default_factory=dict)

    @property
    def num_samples(self) -> int:
        return len(self.records)

    @property
    def num_parties(self) -> int:
        return len(self.records[0].m)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


# ---------------------------------------------------------------------------
# generators

def gen_mcar(ds: PartitionedDataset, p: float, rng: RngStream) -> MaskSet:
    """Each block missing independently with probability p; all-missing rows redrawn."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError("mcar drop probability must be in [0, 1)")
    k = ds.num_parties
    records = []
    for i in range(ds.num_samples):
        sub = rng.substream("mcar", i)
        if p == 0.0:
            records.append(AvailabilityRecord((0,) * k, 1))
            continue
        for _ in range(_MAX_RESAMPLE):
            m = sub.bernoulli(p, k)
            if m.sum() < k:
                records.append(AvailabilityRecord(tuple(int(v) for v in m), 1))
                break
        else:
            raise ConfigurationError("mcar rejection loop exceeded the resample cap")
    return MaskSet(records, {"mechanism": {"kind": "mcar", "p": p}, "num_samples": ds.num_samples})


def _block_stat(ds: PartitionedDataset, stat: str) -> np.ndarray:
    """(N, K) per-sample per-block statistic over the block's own features."""
    cols = []
    for b in ds.blocks:
        if stat == "var":
            cols.append(b.var(axis=1))  # population variance, ddof=0
        else:
            cols.append(b.mean(axis=1))
    return np.stack(cols, axis=1)


def _resolve_visit_order(i: int, k: int, sub: RngStream, visit_orders) -> np.ndarray:
    if visit_orders is None:
        return sub.permutation(k)
    order = np.asarray(visit_orders(i), dtype=np.int64)
    if sorted(order.tolist()) != list(range(k)):
        raise ConfigurationError(f"visit order for sample {i} is not a permutation of 0..{k - 1}")
    return order


def gen_mar_type1(
    ds: PartitionedDataset,
    rng: RngStream,
    threshold: float = 1.1,
    decrement: float = 0.15,
    visit_orders=None,
) -> MaskSet:
    """Variance-threshold visits: walk blocks in random order, stop after the
    first block whose feature variance exceeds the (decaying) threshold.
    Visited blocks, the stopping one included, are observed.

    `visit_orders` is a test hook: a callable i -> permutation of parties that
    replaces the per-sample random order.
    """
    k = ds.num_parties
    variances = _block_stat(ds, "var")
    records = []
    for i in range(ds.num_samples):
        sub = rng.substream("mar1", i)
        order = _resolve_visit_order(i, k, sub, visit_orders)
        t = threshold
        observed = []
        for piece in order:
            observed.append(int(piece))
            if variances[i, piece] > t:
                break
            t -= decrement
        m = [1] * k
        for piece in observed:
            m[piece] = 0
        records.append(AvailabilityRecord(tuple(m), 1))
    return MaskSet(
        records,
        {
            "mechanism": {"kind": "mar1", "threshold": threshold, "decrement": decrement},
            "num_samples": ds.num_samples,
        },
    )


def gen_mar_type2(
    ds: PartitionedDataset,
    rng: RngStream,
    threshold: float = 0.5,
    budget: float = 0.7,
    decrement: float = 0.15,
    visit_orders=None,
) -> MaskSet:
    """Budgeted variant: each visited block whose variance exceeds the
    threshold spends (variance - threshold) of the budget; the walk stops
    once the budget is exhausted. Visited blocks are observed."""
    k = ds.num_parties
    variances = _block_stat(ds, "var")
    records = []
    for i in range(ds.num_samples):
        sub = rng.substream("mar2", i)
        order = _resolve_visit_order(i, k, sub, visit_orders)
        t, b = threshold, budget
        observed = []
        for piece in order:
            observed.append(int(piece))
            v = variances[i, piece]
            if v > t:
                b -= v - t
            if b <= 0.0:
                break
            t -= decrement
        m = [1] * k
        for piece in observed:
            m[piece] = 0
        records.append(AvailabilityRecord(tuple(m), 1))
    return MaskSet(
        records,
        {
            "mechanism": {
                "kind": "mar2",
                "threshold": threshold,
                "budget": budget,
                "decrement": decrement,
            },
            "num_samples": ds.num_samples,
        },
    )


def gen_mnar(ds: PartitionedDataset, p: float, rng: RngStream) -> MaskSet:
    """Value-dependent drops: a block with negative feature mean is missing
    with probability p, otherwise with probability 1 - p; all-missing rows
    are redrawn. Expects normalized features."""
    if not 0.0 < p < 1.0:
        raise ConfigurationError("mnar probability must be in (0, 1)")
    k = ds.num_parties
    means = _block_stat(ds, "mean")
    records = []
    for i in range(ds.num_samples):
        probs = np.where(means[i] < 0.0, p, 1.0 - p)
        sub = rng.substream("mnar", i)
        for _ in range(_MAX_RESAMPLE):
            m = sub.bernoulli(probs, k)
            if m.sum() < k:
                records.append(AvailabilityRecord(tuple(int(v) for v in m), 1))
                break
        else:
            raise ConfigurationError("mnar rejection loop exceeded the resample cap")
    return MaskSet(records, {"mechanism": {"kind": "mnar", "p": p}, "num_samples": ds.num_samples})


def generate(ds: PartitionedDataset, spec: MechanismSpec, rng: RngStream) -> MaskSet:
    if spec.kind == "mcar":
        return gen_mcar(ds, spec.p, rng)
    if spec.kind == "mar1":
        return gen_mar_type1(ds, rng, spec.threshold, spec.decrement)
    if spec.kind == "mar2":
        return gen_mar_type2(ds, rng, spec.threshold, spec.budget, spec.decrement)
    return gen_mnar(ds, spec.p, rng)


# ---------------------------------------------------------------------------
# labels

def assign_label_availability(
    masks: MaskSet, labeled_count: int, aligned_labeled_count: int, rng: RngStream
) -> MaskSet:
    """Mark a uniform random subset as labeled (u=0); force the first
    aligned_labeled_count of those fully aligned (m = all zeros)."""
    n = masks.num_samples
    if not 0 <= labeled_count <= n:
        raise ConfigurationError("labeled_count out of range")
    if not 0 <= aligned_labeled_count <= labeled_count:
        raise ConfigurationError("aligned_labeled_count must not exceed labeled_count")
    order = rng.substream("labels").permutation(n)
    chosen = order[:labeled_count]
    aligned = set(int(i) for i in chosen[:aligned_labeled_count])
    labeled = set(int(i) for i in chosen)
    k = masks.num_parties
    records = []
    for i, rec in enumerate(masks.records):
        m = (0,) * k if i in aligned else rec.m
        u = 0 if i in labeled else 1
        records.append(AvailabilityRecord(m, u))
    prov = dict(masks.provenance)
    prov["labeled_count"] = labeled_count
    prov["aligned_labeled_count"] = aligned_labeled_count
    return MaskSet(records, prov)


# ---------------------------------------------------------------------------
# audit

@dataclass
class MaskAudit:
    num_samples: int
    party_missing_rate: list
    alignment_counts: dict
    label_rate: float

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "num_samples": self.num_samples,
            "party_missing_rate": self.party_missing_rate,
            "alignment_counts": self.alignment_counts,
            "label_rate": self.label_rate,
        }


def audit(masks: MaskSet) -> MaskAudit:
    n = masks.num_samples
    k = masks.num_parties
    m = np.array([rec.m for rec in masks.records], dtype=np.float64)
    counts = {cls.value: 0 for cls in AlignmentClass}
    for rec in masks.records:
        counts[alignment_class(rec, k).value] += 1
    labeled = sum(1 for rec in masks.records if rec.u == 0)
    return MaskAudit(
        num_samples=n,
        party_missing_rate=[float(v) for v in m.mean(axis=0)],
        alignment_counts=counts,
        label_rate=labeled / n,
    )


# ---------------------------------------------------------------------------
# mask CSV

def save_masks(masks: MaskSet, path) -> None:
    k = masks.num_parties
    header = [f"m{j}" for j in range(1, k + 1)] + ["u"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in masks.records:
            writer.writerow([str(v) for v in rec.m] + [str(rec.u)])


def load_masks(path) -> MaskSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty mask file") from None
        if len(header) < 2 or header[-1] != "u":
            raise FormatError("mask header must be m1,...,mK,u")
        k = len(header) - 1
        if header[:-1] != [f"m{j}" for j in range(1, k + 1)]:
            raise FormatError("mask header must be m1,...,mK,u")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != k + 1:
                raise FormatError(f"line {lineno}: expected {k + 1} fields")
            try:
                vals = [int(v) for v in row]
            except ValueError:
                raise FormatError(f"line {lineno}: mask entries must be integers") from None
            if any(v not in (0, 1) for v in vals):
                raise FormatError(f"line {lineno}: mask entries must be 0 or 1")
            try:
                records.append(AvailabilityRecord(tuple(vals[:-1]), vals[-1]))
            except ConfigurationError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
    if not records:
        raise FormatError("mask file has no rows")
    return MaskSet(records, {"source": str(path)})
