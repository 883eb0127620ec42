"""Counting integer matrices with small entries and prescribed rank mod p."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import EnumerationTooLarge, PreconditionViolated
from .modring import batch_rank_mod_p
from .numtheory import is_prime

COUNT_CAP = 10**9


@dataclass(frozen=True)
class RankCountQuery:
    d: int
    n: int
    r: int
    p: int
    b: int

    def __post_init__(self):
        if not 1 <= self.r < self.n < self.d:
            raise PreconditionViolated(f"need 1 <= r < n < d, got r={self.r} n={self.n} d={self.d}")
        if self.p < 3 or not is_prime(self.p):
            raise PreconditionViolated(f"p = {self.p} must be an odd prime")
        if not 1 <= self.b <= (self.p - 1) // 2:
            raise PreconditionViolated(f"b = {self.b} outside [1, (p-1)/2]")


def box_vectors(d: int, b: int) -> np.ndarray:
    """All of [-b, b]^d, ascending lexicographically."""
    axes = [np.arange(-b, b + 1)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def rref_mod_p(rows, p: int) -> tuple[tuple[int, ...], ...]:
    """Reduced row echelon basis of the span of rows over F_p (canonical key)."""
    a = [[x % p for x in r] for r in rows]
    out, col, ncols = [], 0, len(a[0]) if a else 0
    for col in range(ncols):
        piv = next((i for i in range(len(out), len(a)) if a[i][col]), None)
        if piv is None:
            continue
        k = len(out)
        a[k], a[piv] = a[piv], a[k]
        inv = pow(a[k][col], -1, p)
        a[k] = [x * inv % p for x in a[k]]
        for i in range(len(a)):
            if i != k and a[i][col]:
                f = a[i][col]
                a[i] = [(x - f * y) % p for x, y in zip(a[i], a[k])]
        out.append(k)
    return tuple(tuple(a[i]) for i in range(len(out)))


def _residuals(vecs: np.ndarray, basis: tuple, p: int) -> np.ndarray:
    """v minus its projection along the pivots of an RREF basis, mod p (kernel = span)."""
    w = vecs % p
    for row in basis:
        row = np.array(row, dtype=np.int64)
        piv = int(np.flatnonzero(row)[0])
        w = (w - np.outer(w[:, piv], row)) % p
    return w


def _normalize(w: np.ndarray, p: int) -> np.ndarray:
    """Scale each nonzero row so its first nonzero entry is 1."""
    first = np.argmax(w != 0, axis=1)
    lead = w[np.arange(len(w)), first]
    inv = np.array([pow(int(x), -1, p) for x in range(1, p)], dtype=np.int64)
    return (w * inv[lead - 1][:, None]) % p


def _step(states: dict, vecs: np.ndarray, p: int, keep) -> dict:
    """Append one column from vecs to every state; keep(dim) filters the new spans."""
    out: dict = {}
    for basis, cnt in states.items():
        w = _residuals(vecs, basis, p)
        zero = ~w.any(axis=1)
        inside = int(zero.sum())
        if inside and keep(len(basis)):
            out[basis] = out.get(basis, 0) + cnt * inside
        if keep(len(basis) + 1) and inside < len(vecs):
            keys, mult = np.unique(_normalize(w[~zero], p), axis=0, return_counts=True)
            for key, m in zip(keys, mult):
                nb = rref_mod_p(list(basis) + [key.tolist()], p)
                out[nb] = out.get(nb, 0) + cnt * int(m)
    return out


def count_by_rank(d: int, n: int, p: int, b: int, target: int | None = None,
                  threads: int = 1, cap: int = COUNT_CAP) -> list[int]:
    """Number of d x n integer matrices with entries in [-b, b] of each rank mod p.

    Columns are appended left to right while tracking the mod-p span; with a target
    rank, spans that are too large, or too small to still reach it, are pruned.
    """
    if (2 * b + 1) ** (d * n) > cap and target is None:
        raise EnumerationTooLarge(f"(2b+1)^(dn) = {(2 * b + 1) ** (d * n)} exceeds cap {cap}")
    vecs = box_vectors(d, b)
    if len(vecs) > cap:
        raise EnumerationTooLarge(f"{len(vecs)} column candidates exceed cap {cap}")

    def keep_at(col):  # after placing column `col` (1-based)
        if target is None:
            return lambda k: True
        return lambda k: k <= target and k + (n - col) >= target

    def run(chunk):
        states = _step({(): 1}, chunk, p, keep_at(1))
        for col in range(2, n + 1):
            states = _step(states, vecs, p, keep_at(col))
        tally = [0] * (min(d, n) + 1)
        for basis, cnt in states.items():
            tally[len(basis)] += cnt
        return tally

    # parallel over the first column's value; integer merge is order independent
    chunks = np.array_split(vecs, max(1, threads))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return [sum(col) for col in zip(*parts)]


def count_rank(query: RankCountQuery, threads: int = 1, cap: int = COUNT_CAP) -> int:
    return count_by_rank(query.d, query.n, query.p, query.b, target=query.r, threads=threads, cap=cap)[query.r]


def count_rank_naive(d: int, n: int, p: int, b: int, r: int, cap: int = 10**7) -> int:
    """Enumerate every matrix and compute its rank mod p."""
    total = (2 * b + 1) ** (d * n)
    if total > cap:
        raise EnumerationTooLarge(f"{total} matrices exceed cap {cap}")
    vecs = box_vectors(d, b)
    count = 0
    # fix all columns but the last, stack the last over the whole box
    for head in product(range(len(vecs)), repeat=n - 1):
        X = np.empty((len(vecs), d, n), dtype=np.int64)
        for j, idx in enumerate(head):
            X[:, :, j] = vecs[idx]
        X[:, :, n - 1] = vecs
        count += int((batch_rank_mod_p(X % p, p) == r).sum())
    return count


def count_invertible(r: int, p: int, b: int) -> int:
    """#{Y in M_r(Z) : ||Y||_inf <= b, det Y != 0 mod p}."""
    return count_by_rank(r, r, p, b, target=r)[r]


def envelope_exact(q: RankCountQuery) -> Fraction:
    return max(Fraction(q.b) ** (q.d * q.r),
               Fraction(q.b) ** (q.d * q.n) / Fraction(q.p) ** ((q.d - q.r) * (q.n - q.r)))


def envelope(q: RankCountQuery) -> float:
    return float(envelope_exact(q))


def crossover_b(p: int, d: int, r: int) -> float:
    """b where the two envelope terms agree: p^{(d-r)/d}."""
    return p ** ((d - r) / d)


@dataclass
class LowerBoundReport:
    query: RankCountQuery
    count: int
    first: int  # b^{dr}
    second: Fraction  # b^{dr} ((b/2)^d p^{r-d})^{n-r}
    envelope: Fraction

    @property
    def first_ok(self) -> bool:
        return self.count >= self.first

    @property
    def second_ok(self) -> bool:
        return self.count > self.second

    @property
    def scaled_ok(self) -> bool:
        q = self.query
        return self.count * 2 ** (q.d * (q.n - q.r)) >= self.envelope

    @property
    def ok(self) -> bool:
        return self.first_ok and self.second_ok and self.scaled_ok

    @property
    def ratio(self) -> float:
        return float(Fraction(self.count) / self.envelope)


def check_lower_bounds(query: RankCountQuery, count: int | None = None, threads: int = 1) -> LowerBoundReport:
    q = query
    N = count_rank(q, threads=threads) if count is None else count
    first = q.b ** (q.d * q.r)
    second = Fraction(first) * (Fraction(q.b, 2) ** q.d * Fraction(q.p) ** (q.r - q.d)) ** (q.n - q.r)
    return LowerBoundReport(q, N, first, second, envelope_exact(q))


def ratio_scan(d: int, n: int, r: int, primes, bs=None, threads: int = 1) -> list[dict]:
    """Rows (p, b, N, envelope, ratio, lower_ok) over primes and legal b (all of them by default)."""
    rows = []
    for p in primes:
        for b in (bs if bs is not None else range(1, (p - 1) // 2 + 1)):
            if not 1 <= b <= (p - 1) // 2:
                continue
            rep = check_lower_bounds(RankCountQuery(d, n, r, p, b), threads=threads)
            rows.append({"p": p, "b": b, "N": rep.count, "envelope": float(rep.envelope),
                         "ratio": rep.ratio, "lower_ok": rep.ok})
    return rows


def scan_summary(rows: list[dict], d: int, n: int, r: int) -> dict:
    ratios = [row["ratio"] for row in rows]
    floor = 2.0 ** (-d * (n - r))
    return {"rows": len(rows), "min_ratio": min(ratios), "max_ratio": max(ratios),
            "floor": floor, "min_ok": min(ratios) >= floor, "lower_ok": all(row["lower_ok"] for row in rows)}
