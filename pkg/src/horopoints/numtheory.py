"""Small arithmetic helpers on top of sympy's factorization."""
from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import prod

from sympy import factorint, isprime, primerange


@lru_cache(maxsize=4096)
def factor(q: int) -> tuple[tuple[int, int], ...]:
    """Sorted (prime, exponent) pairs of q; empty for q = 1."""
    if q < 1:
        raise ValueError(f"modulus must be positive, got {q}")
    return tuple(sorted(factorint(q).items()))


def primes_dividing(q: int) -> list[int]:
    return [p for p, _ in factor(q)]


def radical(q: int) -> int:
    return prod(primes_dividing(q))


@lru_cache(maxsize=4096)
def divisors(q: int) -> tuple[int, ...]:
    fs = factor(q)
    out = []
    for exps in product(*[range(e + 1) for _, e in fs]):
        out.append(prod(p**k for (p, _), k in zip(fs, exps)))
    return tuple(sorted(out))


def mobius(m: int) -> int:
    fs = factor(m)
    if any(e > 1 for _, e in fs):
        return 0
    return -1 if len(fs) % 2 else 1


def euler_phi(q: int) -> int:
    return prod((p - 1) * p ** (e - 1) for p, e in factor(q))


def sigma1(m: int) -> int:
    return prod((p ** (e + 1) - 1) // (p - 1) for p, e in factor(m))


def tau(m: int) -> int:
    return prod(e + 1 for _, e in factor(m))


def primes_in(lo: int, hi: int) -> list[int]:
    """Primes p with lo <= p <= hi."""
    return list(primerange(lo, hi + 1))


def is_prime(p: int) -> bool:
    return bool(isprime(p))


@lru_cache(maxsize=1024)
def unit_inverse_table(q: int):
    """Array inv with inv[u] = u^{-1} mod q for units, 0 elsewhere."""
    import numpy as np

    inv = np.zeros(q, dtype=np.int64)
    for u in range(q):
        try:
            inv[u] = pow(u, -1, q) if q > 1 else 0
        except ValueError:
            pass
    inv.setflags(write=False)
    return inv


@lru_cache(maxsize=1024)
def unit_mask(q: int):
    import numpy as np
    from math import gcd

    m = np.array([gcd(u, q) == 1 for u in range(q)], dtype=bool)
    if q == 1:
        m[0] = True
    m.setflags(write=False)
    return m
