"""Synthetic Gaussian-mixture benchmarks with a known Bayes oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PartitionedDataset, from_matrix
from .errors import ConfigurationError
from .rng import RngStream


@dataclass(frozen=True)
class SyntheticSpec:
    """Equal-prior Gaussian classes: x | y = c ~ N(means[c], std^2 * I)."""

    means: tuple  # (C, d) nested tuples
    std: float
    party_dims: tuple
    samples_per_class: int

    def __post_init__(self):
        means = tuple(tuple(float(v) for v in row) for row in self.means)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "party_dims", tuple(int(v) for v in self.party_dims))
        d = sum(self.party_dims)
        if any(len(row) != d for row in means):
            raise ConfigurationError("class means must match total feature dim")
        if len(means) < 2:
            raise ConfigurationError("need at least two classes")
        if self.std <= 0:
            raise ConfigurationError("std must be positive")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be positive")

    @property
    def num_classes(self) -> int:
        return len(self.means)

    @property
    def total_dim(self) -> int:
        return sum(self.party_dims)


def simplex_means(num_classes: int, party_dims, separation: float, std: float) -> tuple:
    """Class means with pairwise distance separation * std, spread so every
    party block carries a share of the signal. Coordinates cycle through the
    centered simplex vertices of R^C."""
    party_dims = tuple(int(v) for v in party_dims)
    d = sum(party_dims)
    c = num_classes
    if c < 2:
        raise ConfigurationError("need at least two classes")
    base = np.eye(c) - 1.0 / c  # centered simplex, pairwise distance sqrt(2)
    m = np.zeros((c, d))
    for j in range(d):
        m[:, j] = base[:, j % c]
    # pairwise squared distance is 2 * ceil-average count of used columns;
    # rescale exactly using the realized minimum pairwise distance
    dmin = min(
        np.linalg.norm(m[a] - m[b]) for a in range(c) for b in range(a + 1, c)
    )
    m *= separation * std / dmin
    return tuple(tuple(float(v) for v in row) for row in m)


def energy_means(energies, party_dims, separation: float, std: float) -> tuple:
    """Class means with a prescribed per-party signal amplitude.

    energies is a (C, K) table; class c's mean inside party k's block is
    energies[c][k] times the unit diagonal direction of that block. The whole
    layout is rescaled so the minimum pairwise distance equals
    separation * std, like simplex_means. Unequal rows of the table give the
    classes different energy per block, which is what makes blockwise
    missingness genuinely hard: a predictor that fills absent blocks with the
    feature mean carries a class-dependent bias, while proper marginalization
    does not."""
    party_dims = tuple(int(v) for v in party_dims)
    e = np.asarray(energies, dtype=float)
    if e.ndim != 2 or e.shape[0] < 2:
        raise ConfigurationError("energies must be a (C, K) table with C >= 2")
    if e.shape[1] != len(party_dims):
        raise ConfigurationError("energies columns must match party count")
    c = e.shape[0]
    blocks = []
    for k, dk in enumerate(party_dims):
        u = np.ones(dk) / math.sqrt(dk)
        blocks.append(e[:, k : k + 1] * u[None, :])
    m = np.concatenate(blocks, axis=1)
    dmin = min(
        np.linalg.norm(m[a] - m[b]) for a in range(c) for b in range(a + 1, c)
    )
    if dmin <= 0:
        raise ConfigurationError("energy rows must be distinct")
    m *= separation * std / dmin
    return tuple(tuple(float(v) for v in row) for row in m)


def gen_synthetic(spec: SyntheticSpec, rng: RngStream) -> PartitionedDataset:
    """Balanced draw: exactly samples_per_class rows per class, presented in
    a seeded shuffled order. Deterministic in the stream."""
    c = spec.num_classes
    n = spec.samples_per_class * c
    d = spec.total_dim
    means = np.asarray(spec.means)
    labels = np.arange(n) % c
    noise = rng.substream("noise").normal((n, d)) * spec.std
    x = means[labels] + noise
    order = rng.substream("order").permutation(n)
    return from_matrix(x[order], spec.party_dims, labels[order], c)


def bayes_accuracy_two_class(spec: SyntheticSpec) -> float:
    """Exact Bayes accuracy for the two-class case: Phi(||mu0 - mu1|| / (2 std))."""
    if spec.num_classes != 2:
        raise ConfigurationError("closed form covers exactly two classes")
    mu = np.asarray(spec.means)
    delta = float(np.linalg.norm(mu[0] - mu[1]))
    return 0.5 * (1.0 + math.erf(delta / (2.0 * spec.std) / math.sqrt(2.0)))


def restrict_to_parties(spec: SyntheticSpec, parties) -> SyntheticSpec:
    """The marginal spec over a subset of parties (useful for oracles)."""
    parties = sorted(parties)
    dims = tuple(spec.party_dims[k] for k in parties)
    offsets = np.cumsum((0,) + spec.party_dims)
    cols = np.concatenate(
        [np.arange(offsets[k], offsets[k + 1]) for k in parties]
    )
    means = tuple(tuple(row[j] for j in cols) for row in np.asarray(spec.means))
    return SyntheticSpec(means, spec.std, dims, spec.samples_per_class)
