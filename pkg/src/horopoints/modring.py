"""Exact linear algebra over Z, Z/qZ and F_p.

Single matrices are handled with Python integers (no overflow is possible).
Bulk work (enumerating GL_n(Z/qZ), batched ranks and determinants) goes
through numpy int64 arrays; every entry there is kept reduced mod q, so
intermediate products stay far below 2**63 for the moduli we accept.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gcd, prod
from typing import Iterator, Sequence

import numpy as np

from .errors import EnumerationTooLarge, NotInvertible, NotSpecialLinear
from .numtheory import factor, unit_inverse_table, unit_mask

DEFAULT_CAP = 10**8
_MAX_BATCH_MODULUS = 1 << 28


# ---------------------------------------------------------------- carriers

@dataclass(frozen=True)
class Modulus:
    q: int
    factors: tuple[tuple[int, int], ...]

    @classmethod
    def of(cls, q: int) -> "Modulus":
        return cls(q, factor(q))

    def __post_init__(self):
        if self.q < 1 or prod(p**e for p, e in self.factors) != self.q:
            raise ValueError(f"bad factorization {self.factors} for {self.q}")


def _rows_of(data) -> tuple[tuple[int, ...], ...]:
    if isinstance(data, (ModMatrix, IntMatrix)):
        return data.entries
    arr = np.asarray(data, dtype=object)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    return tuple(tuple(int(x) for x in row) for row in arr)


@dataclass(frozen=True)
class IntMatrix:
    """Integer matrix with exact (arbitrary precision) entries."""

    entries: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, data) -> "IntMatrix":
        return cls(_rows_of(data))

    @classmethod
    def identity(cls, n: int) -> "IntMatrix":
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.entries[0]) if self.entries else 0

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        return IntMatrix(_mul(self.entries, other.entries))

    @property
    def T(self) -> "IntMatrix":
        return IntMatrix(tuple(zip(*self.entries)))

    def det(self) -> int:
        return det_bareiss(self.entries)

    def mod(self, q: int) -> "ModMatrix":
        return ModMatrix.of(self.entries, q)

    def to_list(self) -> list[list[int]]:
        return [list(r) for r in self.entries]


@dataclass(frozen=True)
class ModMatrix:
    """Matrix over Z/qZ with canonical residues in [0, q)."""

    entries: tuple[tuple[int, ...], ...]
    q: int

    def __post_init__(self):
        if any(not 0 <= x < self.q for row in self.entries for x in row):
            raise ValueError("entries must be reduced mod q")
        if len({len(r) for r in self.entries}) > 1:
            raise ValueError("ragged matrix")

    @classmethod
    def of(cls, data, q: int) -> "ModMatrix":
        return cls(tuple(tuple(x % q for x in row) for row in _rows_of(data)), q)

    @classmethod
    def identity(cls, n: int, q: int) -> "ModMatrix":
        return cls.of(IntMatrix.identity(n).entries, q)

    @property
    def modulus(self) -> Modulus:
        return Modulus.of(self.q)

    @property
    def nrows(self) -> int:
        return len(self.entries)

    @property
    def ncols(self) -> int:
        return len(self.entries[0]) if self.entries else 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    def __matmul__(self, other: "ModMatrix") -> "ModMatrix":
        if other.q != self.q:
            raise ValueError("moduli differ")
        return ModMatrix.of(_mul(self.entries, other.entries), self.q)

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64).reshape(self.shape)

    def centered(self) -> IntMatrix:
        q = self.q
        return IntMatrix(tuple(tuple(x - q if 2 * x > q else x for x in r) for r in self.entries))

    def lift(self) -> IntMatrix:
        return IntMatrix(self.entries)

    def is_zero(self) -> bool:
        return all(x == 0 for r in self.entries for x in r)


@dataclass(frozen=True)
class SnfResult:
    U: IntMatrix
    V: IntMatrix
    D: IntMatrix

    @property
    def diagonal(self) -> list[int]:
        m, n = self.D.shape
        return [self.D.entries[i][i] for i in range(min(m, n))]


# ------------------------------------------------------- scalar utilities

def _mul(a, b):
    bt = list(zip(*b))
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a)


def det_bareiss(rows: Sequence[Sequence[int]]) -> int:
    """Exact integer determinant by fraction-free elimination."""
    a = [list(r) for r in rows]
    n = len(a)
    if n == 0:
        return 1
    if any(len(r) != n for r in a):
        raise ValueError("determinant of a non-square matrix")
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def det_mod(M: ModMatrix) -> int:
    return det_bareiss(M.entries) % M.q


def mat_inv_mod(M: ModMatrix) -> ModMatrix:
    """Inverse over Z/qZ via the adjugate; raises NotInvertible."""
    n, m = M.shape
    if n != m:
        raise ValueError("inverse of a non-square matrix")
    q = M.q
    det = det_mod(M)
    if gcd(det, q) != 1:
        raise NotInvertible(f"det {det} is not a unit mod {q}")
    if q == 1:
        return M
    dinv = pow(det, -1, q)
    rows = M.entries
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [r[:i] + r[i + 1:] for k, r in enumerate(rows) if k != j]
            adj[i][j] = (-1) ** (i + j) * det_bareiss(minor)
    return ModMatrix.of([[x * dinv for x in r] for r in adj], q)


def rank_mod_p(M, p: int) -> int:
    """Row rank of M reduced mod the prime p."""
    a = [[x % p for x in r] for r in _rows_of(M)]
    rank = 0
    ncols = len(a[0]) if a else 0
    for j in range(ncols):
        piv = next((i for i in range(rank, len(a)) if a[i][j]), None)
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        inv = pow(a[rank][j], -1, p)
        a[rank] = [x * inv % p for x in a[rank]]
        for i in range(len(a)):
            if i != rank and a[i][j]:
                c = a[i][j]
                a[i] = [(x - c * y) % p for x, y in zip(a[i], a[rank])]
        rank += 1
    return rank


def smith_normal_form(A) -> SnfResult:
    """Smith normal form with unimodular transforms, U·A·V = D."""
    D = [list(r) for r in _rows_of(A)]
    m = len(D)
    n = len(D[0]) if m else 0
    U = [list(r) for r in IntMatrix.identity(m).entries]
    V = [list(r) for r in IntMatrix.identity(n).entries]

    def swap_rows(i, j):
        D[i], D[j] = D[j], D[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for mat in (D, V):
            for r in mat:
                r[i], r[j] = r[j], r[i]

    def add_row(src, dst, c):
        D[dst] = [x + c * y for x, y in zip(D[dst], D[src])]
        U[dst] = [x + c * y for x, y in zip(U[dst], U[src])]

    def add_col(src, dst, c):
        for mat in (D, V):
            for r in mat:
                r[dst] += c * r[src]

    for t in range(min(m, n)):
        while True:
            nz = [(abs(D[i][j]), i, j) for i in range(t, m) for j in range(t, n) if D[i][j]]
            if not nz:
                break
            _, i, j = min(nz)
            swap_rows(t, i)
            swap_cols(t, j)
            piv = D[t][t]
            dirty = False
            for i in range(t + 1, m):
                if D[i][t]:
                    add_row(t, i, -(D[i][t] // piv))
                    dirty |= D[i][t] != 0
            for j in range(t + 1, n):
                if D[t][j]:
                    add_col(t, j, -(D[t][j] // piv))
                    dirty |= D[t][j] != 0
            if dirty:
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n) if D[i][j] % piv), None)
            if bad is None:
                break
            add_row(bad[0], t, 1)
        if t < m and t < n and D[t][t] < 0:
            D[t] = [-x for x in D[t]]
            U[t] = [-x for x in U[t]]
    return SnfResult(IntMatrix.of(U), IntMatrix.of(V), IntMatrix(tuple(tuple(r) for r in D)) if m else IntMatrix(()))


# ------------------------------------------------------ batched routines

def matrix_block(rows: int, cols: int, q: int, lo: int, hi: int) -> np.ndarray:
    """Matrices with lexicographic (row-major) indices lo..hi-1 over Z/qZ."""
    idx = np.arange(lo, hi, dtype=np.int64)
    k = rows * cols
    out = np.empty((hi - lo, k), dtype=np.int64)
    for pos in range(k - 1, -1, -1):
        out[:, pos] = idx % q
        idx //= q
    return out.reshape(hi - lo, rows, cols)


def all_matrices(rows: int, cols: int, q: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    total = q ** (rows * cols)
    if total > cap:
        raise EnumerationTooLarge(f"{total} candidate {rows}x{cols} matrices mod {q} exceed cap {cap}")
    return matrix_block(rows, cols, q, 0, total)


def _check_batch_modulus(q: int):
    if q >= _MAX_BATCH_MODULUS:
        raise ValueError(f"modulus {q} too large for int64 batch arithmetic")


def batch_det_mod(a: np.ndarray, q: int) -> np.ndarray:
    """Determinants mod q of a stack of square matrices (Laplace expansion)."""
    _check_batch_modulus(q)
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0] % q
    if n == 2:
        return (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]) % q
    total = np.zeros(a.shape[:-2], dtype=np.int64)
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=-2), j, axis=-1)
        term = a[..., 0, j] * batch_det_mod(minor, q) % q
        total = (total + term) if j % 2 == 0 else (total - term)
    return total % q


def batch_adj_mod(a: np.ndarray, q: int) -> np.ndarray:
    """Adjugates mod q of a stack of square matrices."""
    n = a.shape[-1]
    if n == 1:
        return np.ones_like(a) % max(q, 1)
    out = np.empty_like(a)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(a, j, axis=-2), i, axis=-1)
            c = batch_det_mod(minor, q)
            out[..., i, j] = c if (i + j) % 2 == 0 else (-c) % q
    return out


def batch_rank_mod_p(a: np.ndarray, p: int) -> np.ndarray:
    """Ranks mod p of a stack of matrices with shape (k, r, c)."""
    a = np.array(a, dtype=np.int64) % p
    k, r, c = a.shape
    inv = unit_inverse_table(p)
    cur = np.zeros(k, dtype=np.int64)
    rows = np.arange(r)
    for j in range(c):
        mask = (a[:, :, j] != 0) & (rows[None, :] >= cur[:, None])
        has = mask.any(axis=1)
        if not has.any():
            continue
        b = np.nonzero(has)[0]
        rc = cur[b]
        rp = mask[b].argmax(axis=1)
        top = a[b, rc].copy()
        a[b, rc] = a[b, rp]
        a[b, rp] = top
        a[b, rc] = a[b, rc] * inv[a[b, rc, j]][:, None] % p
        f = a[b, :, j].copy()
        f[rows[None, :] <= rc[:, None]] = 0
        a[b] = (a[b] - f[:, :, None] * a[b, rc][:, None, :]) % p
        cur[b] += 1
    return cur


# ----------------------------------------------------------- GL_n(Z/qZ)

def count_gl(n: int, q: int) -> int:
    """#GL_n(Z/qZ) from the product formula, as an exact integer."""
    total = 1
    for p, e in factor(q):
        total *= p ** ((e - 1) * n * n) * prod(p**n - p**j for j in range(n))
    return total


@lru_cache(maxsize=64)
def _gl_table(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    total = q ** (n * n)
    units = unit_mask(q)
    inv = unit_inverse_table(q)
    chunk = 1 << 18
    xs, ys = [], []
    for lo in range(0, total, chunk):
        block = matrix_block(n, n, q, lo, min(total, lo + chunk))
        det = batch_det_mod(block, q)
        keep = units[det]
        block = block[keep]
        adj = batch_adj_mod(block, q)
        xs.append(block)
        ys.append(adj * inv[det[keep]][:, None, None] % q if q > 1 else adj * 0)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y


def gl_table(n: int, q: int, cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """All X in GL_n(Z/qZ) in lexicographic order, together with X^{-1}.

    The arrays are cached and read-only.
    """
    total = q ** (n * n)
    if total > cap:
        raise EnumerationTooLarge(f"{total} candidates for GL_{n}(Z/{q}) exceed cap {cap}")
    return _gl_table(n, q)


def enumerate_gl(n: int, q: int, cap: int = DEFAULT_CAP) -> Iterator[ModMatrix]:
    x, _ = gl_table(n, q, cap)
    for m in x:
        yield ModMatrix(tuple(tuple(int(v) for v in row) for row in m), q)


# ------------------------------------------------------------- SL lifting

def _lift_diag(units: list[int], q: int) -> list[list[int]]:
    """An SL_d(Z) matrix congruent to diag(units) mod q (product of units = 1)."""
    d = len(units)
    L = [list(r) for r in IntMatrix.identity(d).entries]
    w = 1
    for i in range(d - 1):
        w = w * units[i] % q
        e = pow(w, -1, q * q)
        c = (w * e - 1) // (q * q)
        block = [list(r) for r in IntMatrix.identity(d).entries]
        block[i][i], block[i][i + 1] = w, q
        block[i + 1][i], block[i + 1][i + 1] = q * c, e
        L = [list(r) for r in _mul(L, block)]
    return L


def lift_sl(M: ModMatrix) -> IntMatrix:
    """Integer matrix of determinant exactly 1 that reduces to M mod q."""
    q = M.q
    d, d2 = M.shape
    if d != d2:
        raise ValueError("lift_sl needs a square matrix")
    if det_mod(M) != 1 % q:
        raise NotSpecialLinear(f"det {det_mod(M)} != 1 mod {q}")
    for cand in (M.centered(), M.lift()):
        if cand.det() == 1:
            return cand
    A = [list(r) for r in M.entries]
    Einv = [list(r) for r in IntMatrix.identity(d).entries]

    def add_row(src, dst, c):
        # left-multiply A by the transvection; record its inverse on the right of Einv
        A[dst] = [(x + c * y) % q for x, y in zip(A[dst], A[src])]
        for r in Einv:
            r[src] -= c * r[dst]

    def signed_swap(i, k):
        add_row(k, i, 1)
        add_row(i, k, -1)
        add_row(k, i, 1)

    for j in range(d):
        while True:
            nz = [(A[i][j], i) for i in range(j, d) if A[i][j]]
            if len(nz) <= 1 and (not nz or nz[0][1] == j):
                break
            v, i = min(nz)
            if i != j:
                signed_swap(j, i)
            for i in range(j + 1, d):
                if A[i][j]:
                    add_row(j, i, -(A[i][j] // A[j][j]))
        g = A[j][j]
        ginv = pow(g, -1, q)
        for i in range(j):
            if A[i][j]:
                add_row(j, i, -(A[i][j] * ginv % q))
    units = [A[i][i] for i in range(d)]
    L = _lift_diag(units, q)
    out = IntMatrix(_mul(Einv, L))
    assert out.det() == 1 and out.mod(q) == M
    return out


def gl_stream(n: int, q: int, top_chunk: int = 4096) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (X, X^{-1}) blocks covering GL_n(Z/qZ) exactly once, without caching.

    The first n-1 rows are enumerated in lexicographic blocks; every last row is
    tried against each block and kept when the determinant is a unit.
    """
    units = unit_mask(q)
    inv = unit_inverse_table(q)
    last = matrix_block(1, n, q, 0, q**n).reshape(-1, n)
    total_top = q ** (n * (n - 1))
    for lo in range(0, total_top, top_chunk):
        top = matrix_block(n - 1, n, q, lo, min(total_top, lo + top_chunk))
        cof = np.empty((len(top), n), dtype=np.int64)
        for j in range(n):
            c = batch_det_mod(np.delete(top, j, axis=2), q) if n > 1 else np.ones(len(top), dtype=np.int64)
            cof[:, j] = c if (n - 1 + j) % 2 == 0 else (-c) % q
        det = (cof @ last.T) % q  # (tops, last rows)
        ti, li = np.nonzero(units[det])
        X = np.concatenate([top[ti], last[li][:, None, :]], axis=1)
        Xinv = batch_adj_mod(X, q) * inv[det[ti, li]][:, None, None] % q
        yield X, Xinv
