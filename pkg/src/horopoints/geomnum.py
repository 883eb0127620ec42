"""Geometry of numbers: successive minima, lattice point counts, the Phi majorant
with a certified tail, Haar sampling on SL_2(Z)\\SL_2(R) and a Monte Carlo check
of the Siegel mean value formula in the plane."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import atan, pi, sqrt

import numba
import numpy as np

from .errors import DimensionTooLarge, EnumerationTooLarge, PreconditionViolated
from .modring import DEFAULT_CAP
from .rng import worker_rng

MAX_DIM = 6


# ------------------------------------------------------------------ carriers

@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """Rows of ``g`` span the lattice Z^d g; covolume is 1."""

    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("basis must be a square matrix")
        det = np.linalg.det(g)
        if abs(det) < 1e-300:
            raise ValueError("basis rows are linearly dependent")
        if abs(abs(det) - 1) > 1e-9:
            raise ValueError(f"covolume {abs(det)} is not 1; use LatticeBasis.normalized")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def normalized(cls, g) -> "LatticeBasis":
        g = np.array(g, dtype=float)
        return cls(g / abs(np.linalg.det(g)) ** (1 / len(g)))

    @property
    def dim(self) -> int:
        return self.g.shape[0]


@dataclass(frozen=True, eq=False)
class Grid:
    lattice: LatticeBasis
    shift: np.ndarray

    def __post_init__(self):
        s = np.array(self.shift, dtype=float).reshape(-1)
        if len(s) != self.lattice.dim:
            raise ValueError("shift has the wrong dimension")
        object.__setattr__(self, "shift", s)


@dataclass(frozen=True, eq=False)
class BoxRegion:
    """Finite union of half-open boxes [lo, hi)."""

    boxes: tuple  # ((lo, hi), ...) with lo, hi length-d tuples
    disjoint: bool = True

    @classmethod
    def of(cls, boxes, disjoint: bool = True) -> "BoxRegion":
        norm = tuple((tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in boxes)
        for lo, hi in norm:
            if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
                raise ValueError(f"bad box {lo} {hi}")
        r = cls(norm, disjoint)
        if disjoint and not r._pairwise_disjoint():
            raise ValueError("boxes flagged disjoint overlap")
        return r

    def _pairwise_disjoint(self) -> bool:
        for i, (l1, h1) in enumerate(self.boxes):
            for l2, h2 in self.boxes[i + 1:]:
                if all(max(a, c) < min(b, e) for a, b, c, e in zip(l1, h1, l2, h2)):
                    return False
        return True

    @property
    def dim(self) -> int:
        return len(self.boxes[0][0])

    def volume(self) -> float:
        if not self.disjoint:
            raise ValueError("volume of overlapping boxes is not the sum")
        return float(sum(np.prod(np.subtract(hi, lo)) for lo, hi in self.boxes))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts), dtype=bool)
        for lo, hi in self.boxes:
            out |= np.all((pts >= lo) & (pts < hi), axis=1)
        return out

    def bounding(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.min([b[0] for b in self.boxes], axis=0)
        hi = np.max([b[1] for b in self.boxes], axis=0)
        return lo, hi


# ---------------------------------------------------------------- reduction

def gauss_reduce(g: np.ndarray) -> np.ndarray:
    """Lagrange-Gauss reduction of a 2-dimensional row basis."""
    b1, b2 = np.array(g[0], float), np.array(g[1], float)
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1
    while True:
        mu = np.round((b1 @ b2) / (b1 @ b1))
        b2 = b2 - mu * b1
        if b2 @ b2 >= b1 @ b1:
            return np.array([b1, b2])
        b1, b2 = b2, b1


def lll_reduce(g: np.ndarray, delta: float = 0.99) -> np.ndarray:
    """Textbook LLL on the rows of g (floating point, small dimension)."""
    B = np.array(g, dtype=float)
    d = len(B)

    def gso(B):
        Bs = np.zeros_like(B)
        mu = np.zeros((d, d))
        for i in range(d):
            Bs[i] = B[i]
            for j in range(i):
                mu[i, j] = (B[i] @ Bs[j]) / (Bs[j] @ Bs[j])
                Bs[i] = Bs[i] - mu[i, j] * Bs[j]
        return Bs, mu

    Bs, mu = gso(B)
    k = 1
    guard = 0
    while k < d:
        guard += 1
        if guard > 100_000:
            raise RuntimeError("LLL did not terminate")
        for j in range(k - 1, -1, -1):
            r = np.round(mu[k, j])
            if r:
                B[k] = B[k] - r * B[j]
                Bs, mu = gso(B)
        if Bs[k] @ Bs[k] >= (delta - mu[k, k - 1] ** 2) * (Bs[k - 1] @ Bs[k - 1]):
            k += 1
        else:
            B[[k, k - 1]] = B[[k - 1, k]]
            Bs, mu = gso(B)
            k = max(k - 1, 1)
    return B


def reduce_basis(g: np.ndarray) -> np.ndarray:
    d = len(g)
    if d > MAX_DIM:
        raise DimensionTooLarge(f"dimension {d} > {MAX_DIM}")
    if d == 1:
        return np.array(g, dtype=float)
    return gauss_reduce(g) if d == 2 else lll_reduce(g)


def _coeff_box(B: np.ndarray, radius: float, norm: str) -> np.ndarray:
    """Integer coefficient vectors c covering every c B with ||c B|| <= radius."""
    Binv = np.linalg.inv(B)
    if norm == "l2":
        k = np.floor(radius * np.linalg.norm(Binv, axis=0) + 1e-9).astype(np.int64)
    else:
        k = np.floor(radius * np.abs(Binv).sum(axis=0) + 1e-9).astype(np.int64)
    return k


def _enumerate(B: np.ndarray, radius: float, norm: str = "l2", cap: int = DEFAULT_CAP,
               center: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All (coefficients, vectors) of the lattice (or grid, via center) inside the norm ball."""
    d = len(B)
    Binv = np.linalg.inv(B)
    if center is None:
        k = _coeff_box(B, radius, norm)
        lo, hi = -k, k
    else:
        # coefficients of points v + s near 0: c = (x - s) B^{-1} with ||x|| <= radius
        spread = radius * (np.linalg.norm(Binv, axis=0) if norm == "l2" else np.abs(Binv).sum(axis=0))
        c0 = -center @ Binv
        lo = np.floor(c0 - spread - 1e-9).astype(np.int64)
        hi = np.ceil(c0 + spread + 1e-9).astype(np.int64)
    total = int(np.prod(hi - lo + 1))
    if total > cap:
        raise EnumerationTooLarge(f"{total} coefficient vectors exceed cap {cap}")
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    C = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    V = C @ B
    if center is not None:
        V = V + center
    if norm == "l2":
        keep = np.einsum("ij,ij->i", V, V) <= radius * radius * (1 + 1e-12)
    else:
        keep = np.abs(V).max(axis=1) <= radius * (1 + 1e-12)
    return C[keep], V[keep]


def _rank_q(rows: list[list[int]]) -> int:
    """Exact rank over Q of a small integer matrix."""
    a = [[Fraction(x) for x in r] for r in rows]
    rank, ncols = 0, len(a[0]) if a else 0
    for j in range(ncols):
        piv = next((i for i in range(rank, len(a)) if a[i][j] != 0), None)
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        for i in range(rank + 1, len(a)):
            f = a[i][j] / a[rank][j]
            if f:
                a[i] = [x - f * y for x, y in zip(a[i], a[rank])]
        rank += 1
    return rank


def successive_minima(L: LatticeBasis) -> np.ndarray:
    """Exact successive minima for the Euclidean ball (d <= 6)."""
    d = L.dim
    if d > MAX_DIM:
        raise DimensionTooLarge(f"dimension {d} > {MAX_DIM}")
    B = reduce_basis(L.g)
    radius = float(np.max(np.linalg.norm(B, axis=1)))
    C, V = _enumerate(B, radius)
    lengths = np.sqrt(np.einsum("ij,ij->i", V, V))
    order = np.argsort(lengths, kind="stable")
    chosen: list[list[int]] = []
    mins = []
    for i in order:
        if lengths[i] == 0:
            continue
        trial = chosen + [C[i].tolist()]
        if _rank_q(trial) == len(trial):
            chosen = trial
            mins.append(lengths[i])
            if len(mins) == d:
                break
    return np.array(mins)


def successive_minima_direct(L: LatticeBasis, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Second route: no reduction, enumerate on the given basis up to its longest row."""
    B = L.g
    radius = float(np.max(np.linalg.norm(B, axis=1)))
    C, V = _enumerate(B, radius, "l2", cap)
    lengths = np.sqrt(np.einsum("ij,ij->i", V, V))
    chosen: list[list[int]] = []
    mins = []
    for i in np.lexsort((np.arange(len(lengths)), lengths)):
        if lengths[i] == 0:
            continue
        if _rank_q(chosen + [C[i].tolist()]) == len(chosen) + 1:
            chosen.append(C[i].tolist())
            mins.append(lengths[i])
            if len(mins) == L.dim:
                break
    return np.array(mins)


def lattice_battery(count: int = 20, seed: int = 0, max_cond: float = 4.0) -> list[LatticeBasis]:
    """Seeded unimodular bases in dimensions 2..4 with bounded condition number."""
    rng = worker_rng(seed, 0)
    out = []
    while len(out) < count:
        d = 2 + len(out) % 3
        g = np.eye(d) + 0.6 * rng.normal(size=(d, d))
        if np.linalg.cond(g) < max_cond:
            out.append(LatticeBasis.normalized(g))
    return out


# ----------------------------------------------------------------- counting

def count_points(L, region, cap: int = DEFAULT_CAP) -> int:
    """Exact number of lattice (or grid) points in a closed ball (region = radius) or a BoxRegion."""
    lat = L.lattice if isinstance(L, Grid) else L
    shift = L.shift if isinstance(L, Grid) else None
    B = reduce_basis(lat.g)
    if isinstance(region, BoxRegion):
        lo, hi = region.bounding()
        mid = (lo + hi) / 2
        radius = float(np.max(np.abs(hi - lo)) / 2)
        center = (shift if shift is not None else 0) - mid
        _, V = _enumerate(B, radius, "sup", cap, center=np.asarray(center, float))
        return int(region.contains(V + mid).sum())
    R = float(region)
    if shift is None:
        _, V = _enumerate(B, R, "l2", cap)
    else:
        _, V = _enumerate(B, R, "l2", cap, center=shift)
    return len(V)


def minkowski_ratio(L: LatticeBasis, R: float) -> float:
    """#(L in ball of radius R) / prod(1 + R / lambda_i)."""
    lam = successive_minima(L)
    return count_points(L, R) / float(np.prod(1 + R / lam))


# ------------------------------------------------------------- Phi majorant

@dataclass
class PhiResult:
    value: float  # midpoint of the certified bracket
    lower: float
    upper: float
    r_cut: float
    terms: int
    pointwise_bound: float
    ratio: float  # value / pointwise_bound

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _cell_widths(B: np.ndarray) -> np.ndarray:
    """Coordinate extents of the fundamental parallelepiped of the row basis B."""
    return np.abs(B).sum(axis=0)


def _poly_box_count(w: np.ndarray, sign: int, n: int) -> list[float]:
    """Coefficients (ascending) of prod_j (2t + sign*w_j) raised to the n-th power."""
    p = np.array([1.0])
    for wj in w:
        p = np.convolve(p, [sign * wj, 2.0])
    out = np.array([1.0])
    for _ in range(n):
        out = np.convolve(out, p)
    return out.tolist()


def _tail_integral(coeffs: list[float], R: float, kappa: float) -> float:
    """Integral over t > R of (sum_k c_k t^k) * kappa * t^{-kappa-1}."""
    return sum(c * kappa * R ** (k - kappa) / (kappa - k) for k, c in enumerate(coeffs))


def phi_eval(L: LatticeBasis, n: int, a: float, b: float, kappa: float, tol: float = 1e-4,
             cap: int = 10**7) -> PhiResult:
    """Sum over nonzero integer n x d matrices X of 1 / (a + b ||X g||_inf^kappa).

    Terms with ||X g||_inf <= R are summed exactly (by sup-norm level). For the rest,
    the number of lattice vectors in the cube of half-side t lies between
    prod(2t - w_j) and prod(2t + w_j) (w = coordinate widths of the fundamental cell),
    which brackets the tail in closed form. The value returned is the bracket midpoint;
    R doubles until the half-width (the certified error) is below tol relative to the
    value, so the cutoff depends on a / b only and the scaling in (a, b) is exact.
    Everything is computed for b = 1 and divided by b at the end.
    """
    d = L.dim
    if kappa <= n * d:
        raise PreconditionViolated(f"kappa = {kappa} must exceed n d = {n * d}")
    if a <= 0 or b <= 0:
        raise PreconditionViolated("a and b must be positive")
    a1 = a / b
    B = reduce_basis(L.g)
    w = _cell_widths(B)
    lam = successive_minima(L)
    R = max(2 * float(w.max()), 2 * a1 ** (1 / kappa), 1.0)
    up = _poly_box_count(w, +1, n)
    lo = _poly_box_count(w, -1, n)
    while True:
        _, V = _enumerate(B, R, "sup", cap)
        s = np.abs(V).max(axis=1)
        levels, counts = np.unique(s, return_counts=True)
        N = np.cumsum(counts)  # lattice vectors with sup-norm <= level (includes 0)
        F = N.astype(float) ** n - 1
        dF = np.diff(np.concatenate([[0.0], F]))
        f = 1 / (a1 + levels**kappa)
        head = float(np.sum(dF * f))
        FR = float(N[-1]) ** n - 1
        fR = 1 / (a1 + R**kappa)
        # tail = int_R^inf F(t) (-f'(t)) dt - F(R) f(R), with -f' between
        # kappa t^{-kappa-1} / (1 + eps)^2 and kappa t^{-kappa-1} for t >= R
        eps = a1 / R**kappa
        hi_int = _tail_integral(up, R, kappa) - 1 * R**-kappa  # the "-1" of F = N^n - 1
        # lower count prod(2t - w_j)^n is valid (and >= 1) since R >= 2 max w and prod w >= 1
        lo_int = (_tail_integral(lo, R, kappa) - R**-kappa) / (1 + eps) ** 2
        tail_hi = max(0.0, hi_int - fR * FR)
        tail_lo = max(0.0, lo_int - fR * FR)
        if (tail_hi - tail_lo) / 2 < tol * head:
            break
        R *= 2
    lower, upper = (head + tail_lo) / b, (head + tail_hi) / b
    value = (lower + upper) / 2
    thresh = a1 ** (1 / kappa)
    if lam[0] >= thresh:
        pw = 1 / (b * lam[0] ** kappa)
    else:
        pw = float(np.prod((1 + thresh / lam) ** n)) / a
    return PhiResult(float(value), float(lower), float(upper), float(R), int(N[-1]), float(pw), float(value / pw))


# ------------------------------------------------------------ Haar sampling

def haar_sample_z(rng: np.random.Generator, size: int) -> np.ndarray:
    """Points of the standard fundamental domain with density (3/pi) y^{-2}."""
    out = np.empty(0, dtype=complex)
    while len(out) < size:
        m = 2 * (size - len(out)) + 16
        x = rng.random(m) - 0.5
        y = (sqrt(3) / 2) / (1 - rng.random(m))  # density proportional to y^-2 on [sqrt3/2, inf)
        ok = x * x + y * y >= 1
        out = np.concatenate([out, (x + 1j * y)[ok]])
    return out[:size]


def bases_from_z(z: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Unimodular row bases of shape z, rotated by theta."""
    x, y = z.real, z.imag
    s = 1 / np.sqrt(y)
    g = np.zeros((len(z), 2, 2))
    g[:, 0, 0] = s
    g[:, 1, 0] = x * s
    g[:, 1, 1] = y * s
    c, si = np.cos(theta), np.sin(theta)
    k = np.stack([np.stack([c, si], -1), np.stack([-si, c], -1)], 1)
    return np.einsum("kij,kjl->kil", g, k)


def haar_samples_sl2(rng: np.random.Generator, size: int) -> np.ndarray:
    z = haar_sample_z(rng, size)
    theta = 2 * pi * rng.random(size)
    return bases_from_z(z, theta)


def haar_sample_sl2(rng: np.random.Generator) -> LatticeBasis:
    return LatticeBasis(haar_samples_sl2(rng, 1)[0])


# ------------------------------------------------------ Siegel mean in R^2

@dataclass(frozen=True)
class Density:
    """A test function on R^2 for the Siegel check, with its exact integral."""

    kind: str  # "ball", "box", "suppow"
    params: tuple
    support: float  # sup-norm radius containing the support

    @classmethod
    def ball(cls, r: float) -> "Density":
        return cls("ball", (r,), r)

    @classmethod
    def box(cls, lo, hi) -> "Density":
        lo, hi = tuple(map(float, lo)), tuple(map(float, hi))
        return cls("box", lo + hi, max(map(abs, lo + hi)))

    @classmethod
    def sup_power(cls, a: float, b: float, kappa: float, cutoff: float) -> "Density":
        """1 / (a + b ||x||_inf^kappa) restricted to ||x||_inf <= cutoff."""
        return cls("suppow", (a, b, kappa, cutoff), cutoff)

    def integral(self) -> float:
        if self.kind == "ball":
            return pi * self.params[0] ** 2
        if self.kind == "box":
            x0, y0, x1, y1 = self.params
            return (x1 - x0) * (y1 - y0)
        a, b, kappa, T = self.params
        if a == 1 and b == 1 and kappa == 4:
            return 4 * atan(T * T)  # int_0^T 8t / (1 + t^4) dt
        from scipy import integrate

        val, _ = integrate.quad(lambda t: 8 * t / (a + b * t**kappa), 0, T, epsabs=1e-13, epsrel=1e-13)
        return val

    def code(self) -> tuple[int, np.ndarray]:
        k = {"ball": 0, "box": 1, "suppow": 2}[self.kind]
        return k, np.array(self.params + (0.0,) * (4 - len(self.params)), dtype=float)


@numba.njit(cache=True)
def _lattice_sums(G, kind, prm, support):
    """Sum over nonzero v in Z^2 g of rho(v), for each (Gauss-reduced) basis g."""
    out = np.empty(G.shape[0])
    for s in range(G.shape[0]):
        b1x, b1y, b2x, b2y = G[s, 0, 0], G[s, 0, 1], G[s, 1, 0], G[s, 1, 1]
        det = b1x * b2y - b1y * b2x
        # |c_i| <= support * (sum of |column i of g^{-1}|) covers the sup-norm cube
        k1 = int(np.floor(support * (abs(b2y) + abs(b2x)) / abs(det) + 1e-9))
        k2 = int(np.floor(support * (abs(b1y) + abs(b1x)) / abs(det) + 1e-9))
        acc = 0.0
        for c1 in range(-k1, k1 + 1):
            for c2 in range(-k2, k2 + 1):
                if c1 == 0 and c2 == 0:
                    continue
                x = c1 * b1x + c2 * b2x
                y = c1 * b1y + c2 * b2y
                if kind == 0:
                    if x * x + y * y <= prm[0] * prm[0]:
                        acc += 1.0
                elif kind == 1:
                    if prm[0] <= x <= prm[2] and prm[1] <= y <= prm[3]:
                        acc += 1.0
                else:
                    t = max(abs(x), abs(y))
                    if t <= prm[3]:
                        acc += 1.0 / (prm[0] + prm[1] * t ** prm[2])
        out[s] = acc
    return out


def lattice_sums(G: np.ndarray, rho: Density) -> np.ndarray:
    Gr = np.array([gauss_reduce(g) for g in G]) if len(G) else G
    kind, prm = rho.code()
    return _lattice_sums(np.ascontiguousarray(Gr), kind, prm, float(rho.support))


@dataclass
class Welford:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add_batch(self, x: np.ndarray) -> None:
        for v in x:
            self.count += 1
            d = v - self.mean
            self.mean += d / self.count
            self.m2 += d * (v - self.mean)

    def merge(self, other: "Welford") -> None:
        if other.count == 0:
            return
        n = self.count + other.count
        d = other.mean - self.mean
        self.mean += d * other.count / n
        self.m2 += other.m2 + d * d * self.count * other.count / n
        self.count = n

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")


@dataclass
class SiegelReport:
    check: str
    samples: int
    mean: float
    target: float
    stderr: float
    sigmas: float = 3.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(abs(self.mean - self.target) <= self.sigmas * self.stderr)

    def to_record(self) -> dict:
        return {"check": self.check, "samples": self.samples, "mean": float(self.mean),
                "target": float(self.target), "stderr": float(self.stderr), "pass": self.passed, **self.extra}


def siegel_check_d2(rho: Density, samples: int = 100_000, seed: int = 0, workers: int = 16,
                    threads: int = 1, sigmas: float = 3.0) -> SiegelReport:
    """Monte Carlo mean of sum_{v != 0} rho(v) over Haar-random unimodular planar lattices.

    The samples are split over a fixed number of worker substreams (seed, i); the
    thread count only schedules them, so the result does not depend on it.
    """
    sizes = [samples // workers + (i < samples % workers) for i in range(workers)]

    def run(i):
        rng = worker_rng(seed, i)
        acc = Welford()
        G = haar_samples_sl2(rng, sizes[i])
        acc.add_batch(lattice_sums(G, rho))
        return acc

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(workers)))
    else:
        parts = [run(i) for i in range(workers)]
    total = Welford()
    for p in parts:
        total.merge(p)
    stderr = sqrt(total.variance / total.count)
    return SiegelReport(f"siegel_{rho.kind}", samples, total.mean, rho.integral(), stderr, sigmas,
                        {"params": list(rho.params)})
