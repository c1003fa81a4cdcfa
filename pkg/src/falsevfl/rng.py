"""Deterministic, splittable random streams.

Every stochastic operation in the package takes an explicit RngStream.
A stream is identified by a 128-bit Philox key; child streams are derived
by hashing the parent key together with a path of integers/strings, so
`root.substream(epoch, i)` is stable no matter how many draws the parent
or any sibling has made. Streams are single-owner: callers that need
independent randomness derive their own substream instead of sharing one.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ConfigurationError

_ROOT_TAG = b"falsevfl-rng-v1"


def _encode_path_item(item) -> bytes:
    if isinstance(item, (bool, np.bool_)):
        raise ConfigurationError("rng path items must be ints or strings, not bool")
    if isinstance(item, (int, np.integer)):
        return b"i" + int(item).to_bytes(16, "little", signed=True)
    if isinstance(item, str):
        raw = item.encode("utf-8")
        return b"s" + len(raw).to_bytes(4, "little") + raw
    raise ConfigurationError(f"rng path items must be ints or strings, got {type(item).__name__}")


class RngStream:
    """A named, seedable, counter-based random stream (Philox backend)."""

    __slots__ = ("_key", "_gen")

    def __init__(self, key: bytes):
        if len(key) != 16:
            raise ConfigurationError("RngStream key must be 16 bytes")
        self._key = key
        self._gen = None

    @classmethod
    def from_seed(cls, seed: int) -> "RngStream":
        digest = hashlib.sha256(_ROOT_TAG + _encode_path_item(int(seed))).digest()
        return cls(digest[:16])

    def substream(self, *path) -> "RngStream":
        """Derive an independent child stream keyed by `path`."""
        h = hashlib.sha256(self._key)
        for item in path:
            h.update(_encode_path_item(item))
        return RngStream(h.digest()[:16])

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.frombuffer(self._key, dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size=size, dtype=np.float64)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size=size, dtype=np.float64)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def bernoulli(self, p, size=None) -> np.ndarray:
        """0/1 draws; `p` may broadcast against `size`. With no size, an
        array p gets one independent uniform per entry."""
        p = np.asarray(p, dtype=np.float64)
        if size is None and p.shape:
            size = p.shape
        return (self.generator.random(size=size) < p).astype(np.int64)

    def choice(self, n: int, count: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=count, replace=replace)
