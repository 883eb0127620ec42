"""Small solutions of random linear congruences x R = b (mod q): exact counts, the grid
identity, empirical distributions over R, and Monte Carlo limit constants in the plane."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import floor, ceil, sqrt

import numba
import numpy as np

from .errors import EnumerationTooLarge, NotPrimitive, PreconditionViolated
from .geomnum import BoxRegion, Grid, LatticeBasis, gauss_reduce, haar_samples_sl2, lll_reduce
from .rng import worker_rng
from .modring import DEFAULT_CAP, IntMatrix, gl_table, smith_normal_form
from .primitive import _primitive_mask, is_primitive, primitive_table

MAX_REJECTIONS = 10_000


# ---------------------------------------------------------------- regions

def _scaled_ge(x: np.ndarray, c: float, q: int, n: int, d: int) -> np.ndarray:
    """Exact test of x >= c * q^{n/d} for integer x (float fast path, rational fallback)."""
    s = q ** (n / d)
    margin = x - c * s
    out = margin >= 0
    close = np.abs(margin) <= 1e-9 * (1 + np.abs(x))
    if close.any():
        cf = Fraction(c)
        qn = Fraction(q) ** n
        for i in np.flatnonzero(close):
            xi = int(x.flat[i])
            if cf <= 0:
                ok = xi >= 0 or Fraction(-xi) ** d <= (-cf) ** d * qn
            else:
                ok = xi > 0 and Fraction(xi) ** d >= cf**d * qn
            out.flat[i] = ok
    return out


def scaled_contains(X: np.ndarray, region: BoxRegion, q: int, n: int, d: int) -> np.ndarray:
    """Exact membership of integer points X in q^{n/d} * region (half-open boxes)."""
    X = np.atleast_2d(X)
    out = np.zeros(len(X), dtype=bool)
    for lo, hi in region.boxes:
        ok = np.ones(len(X), dtype=bool)
        for j in range(X.shape[1]):
            ok &= _scaled_ge(X[:, j], lo[j], q, n, d) & ~_scaled_ge(X[:, j], hi[j], q, n, d)
        out |= ok
    return out


def integer_points(region: BoxRegion, q: int, n: int, d: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Z^d inside q^{n/d} * region, lexicographic."""
    s = q ** (n / d)
    lo, hi = region.bounding()
    axes = [np.arange(floor(a * s) - 1, ceil(b * s) + 2) for a, b in zip(lo, hi)]
    total = int(np.prod([len(a) for a in axes]))
    if total > cap:
        raise EnumerationTooLarge(f"{total} integer points exceed cap {cap}")
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d).astype(np.int64)
    return X[scaled_contains(X, region, q, n, d)]


def torus_contains(R: np.ndarray, q: int, U: BoxRegion | None) -> np.ndarray:
    """q^{-1} R in U, with R flattened row-major into the unit cube of dimension dn."""
    R = np.asarray(R)
    if U is None:
        return np.ones(len(R), dtype=bool)
    return U.contains(R.reshape(len(R), -1) / q)


# -------------------------------------------------------------- instances

@dataclass(frozen=True, eq=False)
class CongruenceInstance:
    d: int
    n: int
    q: int
    R: np.ndarray  # d x n integer matrix, primitive mod q
    b: tuple
    omega: BoxRegion
    U: BoxRegion | None = None  # None is the whole torus

    def __post_init__(self):
        R = np.array(self.R, dtype=np.int64).reshape(self.d, self.n)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "b", tuple(int(x) for x in np.atleast_1d(self.b)))
        if self.n > self.d or len(self.b) != self.n:
            raise PreconditionViolated("need n <= d and len(b) = n")
        if not is_primitive(R, self.q):
            raise NotPrimitive(f"R is not primitive mod {self.q}")
        if not any(self.b) and not origin_interior(self.omega):
            raise PreconditionViolated("b = 0 needs a region containing a box around the origin")


def origin_interior(region: BoxRegion) -> bool:
    return any(all(l < 0 < h for l, h in zip(lo, hi)) for lo, hi in region.boxes)


def count_solutions(inst: CongruenceInstance, cap: int = DEFAULT_CAP) -> int:
    """#{x in Z^d with q^{-n/d} x in Omega and x R = b mod q}, by direct testing."""
    X = integer_points(inst.omega, inst.q, inst.n, inst.d, cap)
    ok = np.all((X @ inst.R - np.array(inst.b)) % inst.q == 0, axis=1)
    return int(ok.sum())


# ------------------------------------------------------------ grid identity

@dataclass(frozen=True, eq=False)
class SolutionGrid:
    """Z^d A + b C scaled by q^{-n/d}: the solution set of x R = b (mod q)."""

    q: int
    n: int
    A: np.ndarray  # d x d, rows span the kernel lattice, det q^n
    C: np.ndarray  # n x d with C R = I (mod q)
    b: tuple

    @property
    def d(self) -> int:
        return len(self.A)

    @property
    def offset(self) -> np.ndarray:
        return np.array(self.b, dtype=np.int64) @ self.C

    @property
    def scale(self) -> float:
        return self.q ** (-self.n / self.d)

    def grid(self) -> Grid:
        return Grid(LatticeBasis(self.scale * self.A), self.scale * self.offset)

    def count(self, region: BoxRegion, cap: int = DEFAULT_CAP) -> int:
        """Exact #(grid in region) by enumerating z with x = z A + b C."""
        s = self.q ** (self.n / self.d)
        lo, hi = region.bounding()
        Ainv = np.linalg.inv(self.A.astype(float))
        corners = np.array(np.meshgrid(*[[a * s, b * s] for a, b in zip(lo, hi)], indexing="ij")).reshape(self.d, -1).T
        zc = (corners - self.offset) @ Ainv
        zlo = np.floor(zc.min(axis=0)).astype(np.int64) - 1
        zhi = np.ceil(zc.max(axis=0)).astype(np.int64) + 1
        total = int(np.prod(zhi - zlo + 1))
        if total > cap:
            raise EnumerationTooLarge(f"{total} grid coefficients exceed cap {cap}")
        Z = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(zlo, zhi)], indexing="ij"), -1)
        X = Z.reshape(-1, self.d) @ self.A + self.offset
        return int(scaled_contains(X, region, self.q, self.n, self.d).sum())


def grid_construct(R, b, q: int) -> SolutionGrid:
    """Kernel lattice and Bezout translate from the Smith form P R Q = diag(s)."""
    R = np.array(R, dtype=np.int64)
    if R.ndim == 1:
        R = R.reshape(-1, 1)
    d, n = R.shape
    if not is_primitive(R, q):
        raise NotPrimitive(f"R is not primitive mod {q}")
    snf = smith_normal_form(R.tolist())
    P = np.array(snf.U.entries, dtype=object)
    Q = np.array(snf.V.entries, dtype=object)
    s = snf.diagonal
    A = P.copy()
    A[:n] *= q
    # the sign of det P is +-1; flip a row so det A = +q^n
    if IntMatrix.of(A.tolist()).det() < 0:
        A[-1] = -A[-1]
    A = _reduce_integer_basis(np.array(A.tolist(), dtype=np.int64))
    sinv = [pow(int(x), -1, q) if q > 1 else 0 for x in s]
    C = Q @ np.diag(np.array(sinv, dtype=object)) @ P[:n]
    C = np.array([[int(v) % q for v in row] for row in C], dtype=object)
    b = tuple(int(x) for x in np.atleast_1d(b))
    return SolutionGrid(q, n, A, np.array(C.tolist(), dtype=np.int64), b)


def _reduce_integer_basis(A: np.ndarray) -> np.ndarray:
    """LLL-reduce an integer row basis, keeping it integral and of the same determinant."""
    if len(A) == 1:
        return A
    B = gauss_reduce(A) if len(A) == 2 else lll_reduce(A)
    T = np.rint(B @ np.linalg.inv(A.astype(float))).astype(np.int64)
    if abs(round(np.linalg.det(T))) != 1:
        return A
    out = T @ A
    if np.linalg.det(out.astype(float)) < 0:
        out[-1] = -out[-1]
    return out


def grid_gamma(G: SolutionGrid, R) -> np.ndarray:
    """[[A, B], [C, D]] with A R + q B = 0 and C R + q D = I; lies in SL_{d+n}(Z)."""
    R = np.array(R, dtype=object).reshape(G.d, G.n)
    A = np.array(G.A, dtype=object)
    C = np.array(G.C, dtype=object)
    AR = A @ R
    CR = C @ R
    B = -AR // G.q
    D = (np.eye(G.n, dtype=int).astype(object) - CR) // G.q
    if np.any(AR + G.q * B != 0) or np.any(CR + G.q * D != np.eye(G.n, dtype=int)):
        raise AssertionError("grid data not integral")
    return np.block([[A, B], [C, D]])


# ----------------------------------------------------------- distributions

@dataclass
class Histogram:
    q: int
    r_max: int
    counts: list  # r = 0..r_max, then overflow
    total: int
    solution_sum: int  # exact sum of r over all R (overflow included)
    mode: str = "exhaustive"

    @property
    def probs(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.total

    @property
    def mean(self) -> float:
        return self.solution_sum / self.total

    def stderr(self) -> np.ndarray:
        """Binomial standard error; zero for exhaustive histograms, which are exact."""
        p = self.probs
        if self.mode == "exhaustive":
            return np.zeros_like(p, dtype=float)
        return np.sqrt(p * (1 - p) / self.total)

    def records(self) -> list[dict]:
        return [{"q": self.q, "r": r if r <= self.r_max else f">{self.r_max}", "count": int(c),
                 "prob": float(c / self.total)} for r, c in enumerate(self.counts)]


def _solution_counts(X: np.ndarray, Rs: np.ndarray, b, q: int, chunk: int = 4096) -> np.ndarray:
    """Number of rows x of X with x R = b (mod q), for each R in the stack."""
    b = np.array(b, dtype=np.int64)
    out = np.empty(len(Rs), dtype=np.int64)
    for lo in range(0, len(Rs), chunk):
        block = Rs[lo:lo + chunk]
        V = np.einsum("xd,kdn->kxn", X, block) % q
        out[lo:lo + chunk] = np.all(V == b % q, axis=2).sum(axis=1)
    return out


def _tally(sol: np.ndarray, r_max: int) -> tuple[list, int]:
    counts = np.bincount(np.minimum(sol, r_max + 1), minlength=r_max + 2)
    return [int(c) for c in counts], int(sol.sum())


def sample_primitive(rng: np.random.Generator, d: int, n: int, q: int, size: int,
                     U: BoxRegion | None = None) -> np.ndarray:
    """Uniform draws from R_q (inside q U) by rejection from uniform matrices mod q."""
    out = []
    have = 0
    tries = 0
    while have < size:
        m = max(64, 2 * (size - have))
        cand = rng.integers(0, q, size=(m, d, n))
        ok = _primitive_mask(cand, q) & torus_contains(cand, q, U)
        tries += m
        out.append(cand[ok])
        have += int(ok.sum())
        if tries > MAX_REJECTIONS * max(size, 1) and have == 0:
            raise PreconditionViolated("rejection sampler exceeded its cap; U too small?")
    return np.concatenate(out)[:size]


def hist_distribution(d: int, n: int, q: int, omega: BoxRegion, b, r_max: int = 6,
                      U: BoxRegion | None = None, mode: str = "exhaustive", samples: int = 10_000,
                      seed: int = 0, workers: int = 16, threads: int = 1,
                      cap: int = DEFAULT_CAP) -> Histogram:
    """Distribution over R in R_q (inside q U) of the number of small solutions."""
    b = tuple(int(x) for x in np.atleast_1d(b))
    if not any(b) and not origin_interior(omega):
        raise PreconditionViolated("b = 0 needs a region containing a box around the origin")
    X = integer_points(omega, q, n, d, cap)
    if mode == "exhaustive":
        Rs = primitive_table(d, n, q, cap, threads)
        Rs = Rs[torus_contains(Rs, q, U)]
        parts = np.array_split(np.arange(len(Rs)), max(1, threads))

        def run(idx):
            return _solution_counts(X, Rs[idx], b, q)
    elif mode == "sample":
        sizes = [samples // workers + (i < samples % workers) for i in range(workers)]
        parts = list(range(workers))

        def run(i):
            return _solution_counts(X, sample_primitive(worker_rng(seed, i), d, n, q, sizes[i], U), b, q)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            sols = list(ex.map(run, parts))
    else:
        sols = [run(p) for p in parts]
    sol = np.concatenate(sols) if sols else np.zeros(0, dtype=np.int64)
    if len(sol) == 0:
        raise PreconditionViolated("no matrices in R_q meet the torus constraint")
    counts, ssum = _tally(sol, r_max)
    return Histogram(q, r_max, counts, len(sol), ssum, mode)


def joint_frequency(d: int, n: int, q: int, specs, U: BoxRegion | None = None,
                    cap: int = DEFAULT_CAP) -> Fraction:
    """Exact fraction of R in R_q (inside q U) with exactly r_j solutions in Omega_j for all j."""
    Rs = primitive_table(d, n, q, cap)
    Rs = Rs[torus_contains(Rs, q, U)]
    ok = np.ones(len(Rs), dtype=bool)
    for omega, b, r in specs:
        X = integer_points(omega, q, n, d, cap)
        ok &= _solution_counts(X, Rs, tuple(np.atleast_1d(b)), q) == r
    return Fraction(int(ok.sum()), len(Rs))


# --------------------------------------------------------- limit constants

@numba.njit(cache=True)
def _grid_counts(G, U, boxes):
    """#((Z^2 + u) g in the union of half-open boxes), for each sample (g, u)."""
    m = G.shape[0]
    out = np.empty(m, dtype=np.int64)
    bx0 = boxes[:, 0].min()
    by0 = boxes[:, 1].min()
    bx1 = boxes[:, 2].max()
    by1 = boxes[:, 3].max()
    for s in range(m):
        a, b_, c, d = G[s, 0, 0], G[s, 0, 1], G[s, 1, 0], G[s, 1, 1]
        det = a * d - b_ * c
        # inverse of [[a, b], [c, d]] acting on row vectors
        i00, i01, i10, i11 = d / det, -b_ / det, -c / det, a / det
        vx = U[s, 0] * a + U[s, 1] * c
        vy = U[s, 0] * b_ + U[s, 1] * d
        lo0, hi0, lo1, hi1 = 1e300, -1e300, 1e300, -1e300
        for px in (bx0, bx1):
            for py in (by0, by1):
                z0 = (px - vx) * i00 + (py - vy) * i10
                z1 = (px - vx) * i01 + (py - vy) * i11
                lo0, hi0 = min(lo0, z0), max(hi0, z0)
                lo1, hi1 = min(lo1, z1), max(hi1, z1)
        cnt = 0
        for k0 in range(int(np.floor(lo0)) - 1, int(np.ceil(hi0)) + 2):
            for k1 in range(int(np.floor(lo1)) - 1, int(np.ceil(hi1)) + 2):
                x = k0 * a + k1 * c + vx
                y = k0 * b_ + k1 * d + vy
                for t in range(boxes.shape[0]):
                    if boxes[t, 0] <= x < boxes[t, 2] and boxes[t, 1] <= y < boxes[t, 3]:
                        cnt += 1
                        break
        out[s] = cnt
    return out


def _box_array(region: BoxRegion) -> np.ndarray:
    if region.dim != 2:
        raise PreconditionViolated("limit constants are computed in the plane only")
    return np.array([lo + hi for lo, hi in region.boxes], dtype=float)


def sample_grid_counts(rng: np.random.Generator, size: int, regions, shifts) -> np.ndarray:
    """Counts #((Z^2 + b_j u) g in Omega_j) for Haar (g, u); one column per j."""
    G = haar_samples_sl2(rng, size)
    G = np.array([gauss_reduce(g) for g in G]) if size else G
    u = rng.random((size, 2))
    cols = []
    for region, bj in zip(regions, shifts):
        cols.append(_grid_counts(np.ascontiguousarray(G), np.ascontiguousarray(bj * u), _box_array(region)))
    return np.stack(cols, axis=1) if cols else np.zeros((size, 0), dtype=np.int64)


@dataclass
class LimitConstant:
    b_class: str  # "zero" or "nonzero"
    r_max: int
    samples: int
    counts: list  # r = 0..r_max, then overflow
    solution_sum: int
    solution_sq: int
    extra: dict = field(default_factory=dict)

    @property
    def probs(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.samples

    def stderr(self) -> np.ndarray:
        p = self.probs
        return np.sqrt(p * (1 - p) / self.samples)

    @property
    def mean(self) -> float:
        return self.solution_sum / self.samples

    @property
    def mean_stderr(self) -> float:
        var = (self.solution_sq - self.solution_sum**2 / self.samples) / (self.samples - 1)
        return sqrt(var / self.samples)

    def value(self, r: int) -> float:
        return float(self.probs[r])


def limit_constant_mc(omega: BoxRegion, b_class: str = "nonzero", r_max: int = 6, samples: int = 100_000,
                      seed: int = 0, workers: int = 16, threads: int = 1) -> LimitConstant:
    """Monte Carlo estimate of the limit law of #(grid in Omega) in the plane.

    b_class "zero": Haar-random unimodular lattices; "nonzero": Haar-random grids
    (lattice plus a uniform point of its fundamental cell).
    """
    if b_class not in ("zero", "nonzero"):
        raise ValueError("b_class must be 'zero' or 'nonzero'")
    shift = 0.0 if b_class == "zero" else 1.0
    sizes = [samples // workers + (i < samples % workers) for i in range(workers)]

    def run(i):
        return sample_grid_counts(worker_rng(seed, i), sizes[i], [omega], [shift])[:, 0]

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(workers)))
    else:
        parts = [run(i) for i in range(workers)]
    sol = np.concatenate(parts)
    counts, ssum = _tally(sol, r_max)
    return LimitConstant(b_class, r_max, samples, counts, ssum, int((sol * sol).sum()))


def joint_limit_mc(specs, samples: int = 100_000, seed: int = 0, workers: int = 16) -> tuple[float, float]:
    """Monte Carlo estimate (value, stderr) of the joint limit for several (Omega_j, b_j, r_j), n = 1."""
    sizes = [samples // workers + (i < samples % workers) for i in range(workers)]
    hits = 0
    for i in range(workers):
        C = sample_grid_counts(worker_rng(seed, i), sizes[i], [s[0] for s in specs],
                               [float(np.atleast_1d(s[1])[0]) for s in specs])
        ok = np.ones(len(C), dtype=bool)
        for j, (_, _, r) in enumerate(specs):
            ok &= C[:, j] == r
        hits += int(ok.sum())
    p = hits / samples
    return p, sqrt(p * (1 - p) / samples)


@dataclass
class ConvergenceRow:
    r: int
    p_q: float
    c_mc: float
    stderr: float  # sqrt(stderr_MC^2 + stderr_q^2)

    @property
    def passed(self) -> bool:
        return abs(self.p_q - self.c_mc) <= 3 * self.stderr


def compare_to_limit(hist: Histogram, lim: LimitConstant, rs=None) -> list[ConvergenceRow]:
    rs = range(hist.r_max + 1) if rs is None else rs
    hs, ls = hist.stderr(), lim.stderr()
    return [ConvergenceRow(r, float(hist.probs[r]), float(lim.probs[r]), float(np.hypot(hs[r], ls[r]))) for r in rs]


# ------------------------------------------------------------- n = d case

def inverse_experiment(n: int, q: int, omega: BoxRegion, b, U: BoxRegion | None = None,
                       cap: int = DEFAULT_CAP) -> Fraction:
    """Fraction of R in GL_n(Z/q) (inside q U) with b R^{-1} mod q in q Omega (Omega in the torus)."""
    b = np.array(np.atleast_1d(b), dtype=np.int64)
    if len(b) != n:
        raise PreconditionViolated("len(b) must be n")
    X, Xinv = gl_table(n, q, cap)
    keep = torus_contains(X, q, U)
    x = (b @ Xinv[keep]) % q
    hits = omega.contains(x / q)
    return Fraction(int(hits.sum()), int(keep.sum()))


# ------------------------------------------------------ grid identity battery

@dataclass
class GridCase:
    d: int
    n: int
    q: int
    R: np.ndarray
    b: tuple
    boxes: list  # BoxRegion per check


def grid_battery(cases: int = 100, seed: int = 0, max_d: int = 3, max_q: int = 20, boxes: int = 5) -> list[GridCase]:
    """Random primitive R, right-hand sides and boxes, reproducible from the seed."""
    rng = worker_rng(seed, 0)
    out = []
    while len(out) < cases:
        d = int(rng.integers(1, max_d + 1))
        n = int(rng.integers(1, d + 1))
        q = int(rng.integers(1, max_q + 1))
        R = rng.integers(0, q, size=(d, n)) if q > 1 else np.zeros((d, n), dtype=np.int64)
        if not is_primitive(R, q):
            continue
        b = tuple(int(x) for x in rng.integers(-q, 2 * q, size=n))
        regions = []
        for _ in range(boxes):
            lo = rng.uniform(-2, 1, size=d)
            hi = lo + rng.uniform(0.2, 2, size=d)
            regions.append(BoxRegion.of([(lo, hi)]))
        out.append(GridCase(d, n, q, R, b, regions))
    return out


def check_grid_identity(cases: list[GridCase]) -> list[tuple[int, int]]:
    """Pairs (direct count, grid count) for every case and box."""
    pairs = []
    for c in cases:
        G = grid_construct(c.R, c.b, c.q)
        for region in c.boxes:
            direct = int(np.all((integer_points(region, c.q, c.n, c.d) @ c.R - np.array(c.b)) % c.q == 0, axis=1).sum())
            pairs.append((direct, G.count(region)))
    return pairs
