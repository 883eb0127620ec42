"""Exact sums of q-th roots of unity stored as integer residue histograms."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import lcm

import numpy as np
from sympy import Poly, cyclotomic_poly, symbols


@lru_cache(maxsize=512)
def _cyclotomic(q: int) -> tuple[int, ...]:
    x = symbols("x")
    coeffs = Poly(cyclotomic_poly(q, x), x).all_coeffs()
    return tuple(int(c) for c in reversed(coeffs))  # ascending degree, monic


@lru_cache(maxsize=512)
def _roots(q: int) -> np.ndarray:
    r = np.exp(2j * np.pi * np.arange(q) / q)
    r.setflags(write=False)
    return r


@dataclass(frozen=True, eq=False)
class ExpSum:
    """Sum_k counts[k] * e(k/q) with integer counts.

    Histograms are not unique representations (the roots of unity are
    linearly dependent), so exact comparison goes through ``canonical``.
    """

    q: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (self.q,):
            raise ValueError(f"expected {self.q} counts, got shape {c.shape}")
        object.__setattr__(self, "counts", c)

    @classmethod
    def zero(cls, q: int) -> "ExpSum":
        return cls(q, np.zeros(q, dtype=np.int64))

    @classmethod
    def constant(cls, q: int, c: int) -> "ExpSum":
        counts = np.zeros(q, dtype=np.int64)
        counts[0] = c
        return cls(q, counts)

    @classmethod
    def from_phases(cls, phases: np.ndarray, q: int) -> "ExpSum":
        """Histogram of integer phases (reduced mod q)."""
        return cls(q, np.bincount(np.asarray(phases, dtype=np.int64) % q, minlength=q))

    def value(self) -> complex:
        return complex(np.dot(self.counts.astype(np.float64), _roots(self.q)))

    def __abs__(self) -> float:
        return abs(self.value())

    def lift(self, Q: int) -> "ExpSum":
        """Same number viewed as a sum of Q-th roots of unity (q | Q)."""
        if Q % self.q:
            raise ValueError(f"{self.q} does not divide {Q}")
        out = np.zeros(Q, dtype=np.int64)
        out[np.arange(self.q) * (Q // self.q)] = self.counts
        return ExpSum(Q, out)

    def scale(self, c: int) -> "ExpSum":
        return ExpSum(self.q, self.counts * c)

    def shift(self, t: int) -> "ExpSum":
        """Multiply by e(t/q)."""
        return ExpSum(self.q, np.roll(self.counts, t % self.q))

    def __add__(self, other: "ExpSum") -> "ExpSum":
        Q = lcm(self.q, other.q)
        return ExpSum(Q, self.lift(Q).counts + other.lift(Q).counts)

    def __mul__(self, other: "ExpSum") -> "ExpSum":
        Q = lcm(self.q, other.q)
        a, b = self.lift(Q).counts, other.lift(Q).counts
        out = np.zeros(Q, dtype=np.int64)
        for k in np.nonzero(a)[0]:
            out += a[k] * np.roll(b, int(k))
        return ExpSum(Q, out)

    def canonical(self) -> tuple[int, ...]:
        """Coefficients of the counts polynomial reduced mod the q-th cyclotomic polynomial.

        Two histograms represent the same algebraic number iff (after lifting
        to a common modulus) their canonical forms agree.
        """
        phi = _cyclotomic(self.q)
        deg = len(phi) - 1
        c = [int(x) for x in self.counts]
        for top in range(len(c) - 1, deg - 1, -1):
            lead = c[top]
            if lead:
                shift = top - deg
                for i, pc in enumerate(phi):
                    c[shift + i] -= lead * pc
        out = c[:deg]
        while out and out[-1] == 0:
            out.pop()
        return tuple(out)

    def same_as(self, other: "ExpSum") -> bool:
        Q = lcm(self.q, other.q)
        return self.lift(Q).canonical() == other.lift(Q).canonical()

    def as_integer(self) -> int | None:
        """The exact rational-integer value, or None if the sum is not an integer."""
        c = self.canonical()
        if len(c) <= 1:
            return c[0] if c else 0
        return None

    def is_zero(self) -> bool:
        return self.canonical() == ()
