"""Counted warnings for numerical guards. Never silent, never fatal."""

from __future__ import annotations

import warnings
from collections import Counter

counters: Counter = Counter()


def warn_counted(name: str, message: str, amount: int = 1) -> None:
    counters[name] += amount
    warnings.warn(f"{name}: {message}", RuntimeWarning, stacklevel=3)


def reset_counters() -> None:
    counters.clear()
