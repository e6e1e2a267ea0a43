import math

import pytest

from primediffeo.primes import build_table


def is_prime(n: int) -> bool:
    """Trial division, the independent oracle for everything prime-related."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, math.isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


def primes_below(limit: int) -> list[int]:
    return [k for k in range(2, limit) if is_prime(k)]


@pytest.fixture(scope="session")
def small_table():
    return build_table(1000)


@pytest.fixture(scope="session")
def table():
    return build_table(100_000)
