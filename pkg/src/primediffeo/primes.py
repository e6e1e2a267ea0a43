"""Exact prime table: the first N primes, their gaps, and prime counting.

The table is keyed by prime *count*, so spline branch indices are native
indices into it.  Everything here is integer arithmetic.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_COUNT = 100_000
MAX_COUNT = 50_000_000
CACHE_MAGIC = b"PRIMETB1"


class CoverageError(ValueError):
    """Argument lies outside what the prime table can answer."""


class TableSizeError(MemoryError):
    """Requested table exceeds the configured memory budget."""


@dataclass(frozen=True)
class PrimeTable:
    primes: tuple[int, ...]
    _array: np.ndarray = field(repr=False, compare=False)
    _farray: np.ndarray = field(repr=False, compare=False)

    @property
    def limit_n(self) -> int:
        return len(self.primes)

    @property
    def x_max(self) -> float:
        """Largest x at which the counting curve is answerable."""
        return (self.primes[-2] + self.primes[-1]) / 2

    @property
    def p_limit(self) -> int:
        return self.primes[-1]

    @property
    def array(self) -> np.ndarray:
        """The primes as a read-only int64 array (index 0 holds p_1)."""
        return self._array

    @property
    def float_array(self) -> np.ndarray:
        """The primes as float64 (exact below 2**53), for float-keyed searches."""
        return self._farray

    @property
    def gaps(self) -> np.ndarray:
        """Composite counts p_{n+1} - p_n - 1 for n = 1 .. limit_n - 1."""
        return np.diff(self._array) - 1


def table_from_primes(primes) -> PrimeTable:
    ps = tuple(int(p) for p in primes)
    if len(ps) < 3:
        raise ValueError("a prime table needs at least 3 primes")
    arr = np.array(ps, dtype=np.int64)
    farr = arr.astype(float)
    arr.setflags(write=False)
    farr.setflags(write=False)
    return PrimeTable(ps, arr, farr)


def _simple_sieve(limit: int) -> np.ndarray:
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p :: p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def _upper_bound(n: int) -> int:
    # Rosser: p_n < n (ln n + ln ln n) for n >= 6
    if n < 6:
        return 13
    return int(n * (math.log(n) + math.log(math.log(n)))) + 1


def build_table(n_count: int = DEFAULT_COUNT, *, max_count: int = MAX_COUNT,
                segment: int = 1 << 20) -> PrimeTable:
    """Return a table holding exactly the first ``n_count`` primes.

    Uses an odd-only segmented sieve of Eratosthenes up to a proven upper
    bound for p_{n_count}, stopping as soon as enough primes are collected.
    """
    if n_count < 3:
        raise ValueError(f"n_count must be >= 3, got {n_count}")
    if n_count > max_count:
        raise TableSizeError(f"{n_count} primes exceeds the budget of {max_count}")

    bound = _upper_bound(n_count)
    base = _simple_sieve(math.isqrt(bound) + 1)[1:]  # odd base primes
    found = [np.array([2], dtype=np.int64)]
    total = 1
    low = 3
    while total < n_count and low <= bound:
        high = min(low + 2 * segment, bound + 1)
        mask = np.ones((high - low + 1) // 2, dtype=bool)
        for p in base:
            p = int(p)
            if p * p >= high:
                break
            start = max(p * p, -(-low // p) * p)
            if start % 2 == 0:
                start += p
            mask[(start - low) // 2 :: p] = False
        seg = low + 2 * np.flatnonzero(mask)
        found.append(seg)
        total += seg.size
        low = high if high % 2 else high + 1
    primes = np.concatenate(found)[:n_count]
    return table_from_primes(primes.tolist())


def nth_prime(t: PrimeTable, n: int) -> int:
    if not 1 <= n <= t.limit_n:
        raise CoverageError(f"n={n} outside 1..{t.limit_n}")
    return t.primes[n - 1]


def gap(t: PrimeTable, n: int) -> int:
    """Number of composites strictly between p_n and p_{n+1}."""
    if not 1 <= n <= t.limit_n - 1:
        raise CoverageError(f"gap index n={n} outside 1..{t.limit_n - 1}")
    return t.primes[n] - t.primes[n - 1] - 1


def pi_count(t: PrimeTable, x: float) -> int:
    """Exact number of primes <= x, by binary search on the table."""
    if not 2 <= x <= t.p_limit:
        raise CoverageError(f"x={x} outside [2, {t.p_limit}]")
    return bisect_right(t.primes, x)


def save_table(t: PrimeTable, path) -> None:
    """Write the prime list as magic header + little-endian int64 values."""
    Path(path).write_bytes(CACHE_MAGIC + t.array.astype("<i8").tobytes())


def load_table(path) -> PrimeTable:
    raw = Path(path).read_bytes()
    if raw[:8] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a prime table cache")
    body = raw[8:]
    if len(body) % 8:
        raise ValueError(f"{path}: truncated cache ({len(body)} payload bytes)")
    return table_from_primes(np.frombuffer(body, dtype="<i8").tolist())


def cached_table(n_count: int, path=None) -> PrimeTable:
    """Load a table from ``path`` when it holds enough primes, else build (and save)."""
    if path is not None and Path(path).exists():
        t = load_table(path)
        if t.limit_n >= n_count:
            return t if t.limit_n == n_count else table_from_primes(t.primes[:n_count])
    t = build_table(n_count)
    if path is not None:
        save_table(t, path)
    return t
