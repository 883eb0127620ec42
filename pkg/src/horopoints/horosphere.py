"""Weyl sums over primitive points, the Kloosterman expansion of A_q for n = d,
joint character sums for n < d, and Hecke points on the modular surface."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np
from scipy import integrate

from .errors import PreconditionViolated
from .expsum import ExpSum, _roots
from .kloosterman import kloos_value
from .modring import DEFAULT_CAP, batch_adj_mod, batch_det_mod, count_gl, gl_table
from .numtheory import divisors, euler_phi, factor, is_prime, mobius, sigma1, tau, unit_inverse_table
from .primitive import coset_reps, param_bij, primitive_count, primitive_table

THETA_KIM_SARNAK = 7 / 64
DECAY_SLACK = 0.15


def _imat(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    out = np.array(a, dtype=np.int64)
    if rows is not None and out.size == rows * cols:
        out = out.reshape(rows, cols)
    elif out.ndim == 1:
        out = out.reshape(-1, 1)
    if rows is not None and out.shape != (rows, cols):
        raise ValueError(f"expected shape {(rows, cols)}, got {out.shape}")
    return out


# ------------------------------------------------------------ test functions

@dataclass(frozen=True)
class TrigPoly:
    """f(T1, T2) = sum c * e(tr(N^t T1) + tr(M^t T2)), N d x n and M n x d."""

    d: int
    n: int
    terms: tuple  # ((N entries), (M entries), coeff)

    def __post_init__(self):
        keys = [(N, M) for N, M, _ in self.terms]
        if len(set(keys)) != len(keys):
            raise ValueError("frequencies must be distinct")

    @classmethod
    def of(cls, d: int, n: int, terms) -> "TrigPoly":
        norm = []
        for N, M, c in terms:
            N = _imat(N, d, n)
            M = _imat(M, n, d)
            norm.append((tuple(map(tuple, N.tolist())), tuple(map(tuple, M.tolist())), complex(c)))
        return cls(d, n, tuple(norm))

    @classmethod
    def constant(cls, d: int, n: int, c: complex = 1.0) -> "TrigPoly":
        return cls.of(d, n, [(np.zeros((d, n)), np.zeros((n, d)), c)])

    @classmethod
    def random(cls, d: int, n: int, nterms: int, rng: np.random.Generator, max_freq: int = 3) -> "TrigPoly":
        seen, terms = set(), []
        while len(terms) < nterms:
            N = rng.integers(-max_freq, max_freq + 1, (d, n))
            M = rng.integers(-max_freq, max_freq + 1, (n, d))
            key = (N.tobytes(), M.tobytes())
            if key in seen:
                continue
            seen.add(key)
            terms.append((N, M, complex(rng.normal(), rng.normal())))
        return cls.of(d, n, terms)

    def arrays(self):
        for N, M, c in self.terms:
            yield np.array(N, dtype=np.int64), np.array(M, dtype=np.int64), c

    def __call__(self, T1: np.ndarray, T2: np.ndarray) -> np.ndarray:
        """Evaluate at one point or a stack of points (leading axis)."""
        T1, T2 = np.asarray(T1, dtype=float), np.asarray(T2, dtype=float)
        out = 0j
        for N, M, c in self.arrays():
            ph = np.einsum("...ij,ij->...", T1, N) + np.einsum("...ij,ij->...", T2, M)
            out = out + c * np.exp(2j * pi * ph)
        return out

    def zero_coefficient(self) -> complex:
        return sum((c for N, M, c in self.arrays() if not N.any() and not M.any()), 0j)


# --------------------------------------------------------------- Weyl sums

def weyl_sum_exact(d: int, n: int, q: int, N, cap: int = DEFAULT_CAP) -> tuple[ExpSum, int]:
    """Histogram of tr(N^t R) mod q over R in R_q, with #R_q."""
    N = _imat(N, d, n) % q
    P = primitive_table(d, n, q, cap)
    ph = np.einsum("kij,ij->k", P, N) % q
    return ExpSum.from_phases(ph, q), len(P)


def weyl_sum_formula(d: int, q: int, N) -> float:
    """n = 1: sum over primitive vectors of e_q(N.R), via Moebius inversion over gcd(R, q)."""
    N = np.asarray(N, dtype=np.int64).reshape(-1)
    if len(N) != d:
        raise ValueError("N must have d entries")
    total = 0
    for e in divisors(q):
        f = q // e
        mu = mobius(e)
        if mu and not np.any(N % f):
            total += mu * f**d
    return total / primitive_count(d, 1, q)


def weyl_sum(d: int, n: int, q: int, N, method: str = "auto", cap: int = DEFAULT_CAP) -> complex:
    """(1/#R_q) sum_{R in R_q} e_q(tr(N^t R))."""
    if method == "formula" or (method == "auto" and n == 1 and q ** d > 4096):
        if n != 1:
            raise PreconditionViolated("the divisor formula covers n = 1 only")
        return complex(weyl_sum_formula(d, q, N))
    h, count = weyl_sum_exact(d, n, q, N, cap)
    return h.value() / count


# ------------------------------------------------------------- n = d sums

def aq_direct(f: TrigPoly, q: int, cap: int = DEFAULT_CAP) -> complex:
    """Average of f(R/q, R^{-1}/q) over R in GL_n(Z/qZ), evaluated pointwise."""
    if f.n != f.d:
        raise PreconditionViolated("aq_direct needs n = d")
    X, Xinv = gl_table(f.n, q, cap)
    vals = f(X / q, Xinv / q)
    return complex(np.mean(vals))


def aq_expand(f: TrigPoly, q: int) -> complex:
    """Same average through the Kloosterman expansion: sum c(N,M) K_n(N,M;q) / #GL."""
    if f.n != f.d:
        raise PreconditionViolated("aq_expand needs n = d")
    total = 0j
    for N, M, c in f.arrays():
        total += c * kloos_value(N % q, M % q, q).value()
    return total / count_gl(f.n, q)


# ---------------------------------------------------------- n < d joint sums

def _joint_blocks(d: int, n: int, N, M):
    N = _imat(N, d, n)
    M = _imat(M, n, d)
    A = M[:, d - n:].T  # (0 I_n) M^t
    return N, M, A


def weyl_joint_exact(d: int, n: int, q: int, N, M, cap: int = DEFAULT_CAP) -> tuple[ExpSum, int]:
    """sum over B_q of K_n((0 I_n) M^t, N^t gamma^{-1} (0; I_n); q), with #R_q."""
    N, M, A = _joint_blocks(d, n, N, M)
    total = ExpSum.zero(q)
    for rep in coset_reps(d, n, q, cap):
        ginv = np.array(rep.gamma_inv.entries, dtype=object)
        B = (N.T.astype(object) @ ginv[:, d - n:]) % q
        total = total + kloos_value(A % q, B.astype(np.int64), q)
    return total, primitive_count(d, n, q)


def weyl_joint(d: int, n: int, q: int, N, M, cap: int = DEFAULT_CAP) -> complex:
    h, count = weyl_joint_exact(d, n, q, N, M, cap)
    return h.value() / count


def weyl_joint_direct(d: int, n: int, q: int, N, M, cap: int = DEFAULT_CAP) -> complex:
    """Direct sum over R in R_q of e_q(tr(N^t R) + tr(M^t (0 U^{-1}))), U read off the coset chart."""
    N, M, _ = _joint_blocks(d, n, N, M)
    pb = param_bij(d, n, q, cap)
    P = primitive_table(d, n, q, cap)
    idx = np.zeros(len(P), dtype=np.int64)
    for j in range(d * n):
        idx = idx * q + P.reshape(len(P), -1)[:, j]
    labels = pb.labels[idx] if pb.labels is not None else np.zeros(len(P), dtype=np.int64)
    inv = unit_inverse_table(q)
    hist = np.zeros(q, dtype=np.int64)
    for k, rep in enumerate(pb.reps):
        Rk = P[labels == k]
        g = np.array(rep.gamma.entries, dtype=object) % q
        U = np.einsum("ij,kjl->kil", g.astype(np.int64)[d - n:], Rk) % q
        Uinv = batch_adj_mod(U, q) * inv[batch_det_mod(U, q)][:, None, None] % q
        ph = np.einsum("kij,ij->k", Rk, N % q) + np.einsum("kij,ij->k", Uinv, M[:, d - n:] % q)
        hist += np.bincount(ph % q, minlength=q)
    return ExpSum(q, hist).value() / len(P)


def _k1_rows(q: int, a_values) -> dict:
    """K_1(a, b; q) for every b, one complex row per a."""
    X, Xinv = gl_table(1, q)
    x, xi = X.reshape(-1), Xinv.reshape(-1)
    roots = _roots(q)
    b = np.arange(q)
    return {a: roots[(a * x[None, :] + np.outer(b, xi)) % q].sum(axis=1) for a in a_values}


def weyl_joint_modes_d2(q: int, modes) -> np.ndarray:
    """weyl_joint(2, 1, q, N, M) for many (N, M) at once (floating point)."""
    reps = coset_reps(2, 1, q)
    Rg = np.array([[r.gamma_inv.entries[0][1], r.gamma_inv.entries[1][1]] for r in reps], dtype=np.int64) % q
    rows = _k1_rows(q, sorted({int(M[1]) % q for _, M in modes}))
    out = np.empty(len(modes), dtype=complex)
    for i, (N, M) in enumerate(modes):
        b = (Rg @ np.asarray(N, dtype=np.int64)) % q
        out[i] = rows[int(M[1]) % q][b].sum() / primitive_count(2, 1, q)
    return out


def default_modes_d2(radius: int = 2) -> list:
    """Modes (N, M) with entries in [-radius, radius] whose character on S_q is nontrivial.

    Only the last column of M enters the sum over S_q, so M = (0, e) covers every
    distinct character; (N, e) = 0 is the constant character and is left out.
    """
    r = range(-radius, radius + 1)
    return [((a, b), (0, e)) for a in r for b in r for e in r if (a, b, e) != (0, 0, 0)]


# ------------------------------------------------------- modular surface

def reduce_to_fd(z, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Map points of the upper half plane to {|x| <= 1/2, |z| >= 1} under SL_2(Z)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    if np.any(z.imag <= 0):
        raise ValueError("points must lie in the upper half plane")
    for _ in range(max_iter):
        z = z - np.round(z.real)
        inside = np.abs(z) < 1 - tol
        if not inside.any():
            return z
        z[inside] = -1 / z[inside]
    raise RuntimeError("fundamental-domain reduction did not terminate")


@dataclass
class HeckeOrbit:
    m: int
    z: complex
    raw: np.ndarray
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def hecke_points(m: int, z: complex) -> HeckeOrbit:
    """The sigma_1(m) points (a z + b) / (m / a), a | m, 0 <= b < m/a, reduced."""
    if m < 1:
        raise ValueError("m must be positive")
    raw = []
    for a in divisors(m):
        c = m // a
        raw.append((a * z + np.arange(c)) / c)
    raw = np.concatenate(raw)
    return HeckeOrbit(m, complex(z), raw, reduce_to_fd(raw))


class ModularFunction:
    """Function on the modular surface, given in fundamental-domain coordinates."""

    breaks: tuple = ()  # y-values where the function is not smooth

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tail(self) -> float | None:
        """Constant value for large y, if any (used to integrate the cusp exactly)."""
        return None

    def mu0_mean(self) -> float:
        return mu0_mean_quadrature(self)


@dataclass
class Constant(ModularFunction):
    c: float = 1.0

    def __call__(self, z):
        return np.full(np.shape(z), self.c, dtype=float)

    def tail(self):
        return self.c

    def mu0_mean(self):
        return self.c


@dataclass
class HeightIndicator(ModularFunction):
    """1 if Im z > y0 (for y0 >= 1 this is a cusp neighbourhood)."""

    y0: float = 2.0

    def __post_init__(self):
        self.breaks = (self.y0,)

    def __call__(self, z):
        return (np.imag(z) > self.y0).astype(float)

    def tail(self):
        return 1.0

    def mu0_mean(self):
        if self.y0 >= 1:
            return 3 / (pi * self.y0)
        return mu0_mean_quadrature(self)


@dataclass
class TruncatedHeight(ModularFunction):
    """min(y, ymax)^s."""

    s: float = 0.5
    ymax: float = 4.0

    def __post_init__(self):
        self.breaks = (self.ymax,)

    def __call__(self, z):
        return np.minimum(np.imag(z), self.ymax) ** self.s

    def tail(self):
        return self.ymax**self.s


@dataclass
class SmoothBump(ModularFunction):
    """exp(1 - 1/(1 - r^2)) for r = |z - center| / radius < 1, else 0."""

    center: complex = 1.5j
    radius: float = 0.4

    def __call__(self, z):
        r2 = np.abs(np.asarray(z) - self.center) ** 2 / self.radius**2
        out = np.zeros(np.shape(r2))
        ok = r2 < 1
        out[ok] = np.exp(1 - 1 / (1 - r2[ok]))
        return out

    def tail(self):
        return 0.0


def mu0_mean_quadrature(phi: ModularFunction, ymax: float = 50.0, tol: float = 1e-10) -> float:
    """(3/pi) * integral of phi(x + iy) y^{-2} over the fundamental domain.

    Adaptive quadrature below ymax (split at the function's breaks); above ymax
    the function must be constant, and that piece is integrated in closed form.
    """
    t = phi.tail()
    if t is None:
        raise ValueError("quadrature needs a function that is constant high in the cusp")
    cuts = sorted({1.0, *[b for b in phi.breaks if 1.0 < b < ymax], ymax})

    def f(y, x):
        return float(phi(np.array([complex(x, y)]))[0]) / (y * y)

    total = 0.0
    # below y = 1 the domain is bounded by the unit circle
    lo, err = integrate.dblquad(f, -0.5, 0.5, lambda x: sqrt(1 - x * x), lambda x: 1.0, epsabs=tol, epsrel=tol)
    total += lo
    for a, b in zip(cuts, cuts[1:]):
        part, err = integrate.dblquad(f, -0.5, 0.5, a, b, epsabs=tol, epsrel=tol)
        total += part
    total += t / ymax
    return 3 / pi * total


def hecke_average(phi, m: int, z: complex = 2j) -> float:
    """(T_m phi)(z) = mean of phi over the Hecke orbit."""
    pts = hecke_points(m, z).points
    return float(np.mean(phi(pts)))


def hecke_dq_formula(phi, q: int, z: complex = 2j) -> float:
    """T_{D_q} for d = 2 as a combination of the T_m."""
    norm = q
    for p, _ in factor(q):
        norm *= 1 + 1 / p
    total = 0.0
    for a in divisors(q):
        if q % (a * a) == 0 and mobius(a):
            m = q // (a * a)
            total += mobius(a) * sigma1(m) * hecke_average(phi, m, z)
    return total / norm


def hecke_dq_cosets(phi, q: int, z: complex = 2j) -> float:
    """T_{D_q} for d = 2 directly from coset representatives: mean of phi(D_q delta z)."""
    pts = []
    for rep in coset_reps(2, 1, q):
        (a, b), (c, e) = rep.gamma.entries
        w = (a * z + b) / (c * z + e)
        pts.append(w / q)  # D_q = q^{-1/2} diag(1, q) acts by w -> w / q
    return float(np.mean(phi(reduce_to_fd(np.array(pts)))))


# -------------------------------------------------------------- decay scans

@dataclass
class DecayTarget:
    """Log-log fit of a scanned quantity against the predicted exponent."""

    mode: str
    exponent: float | None  # predicted decay exponent (theta, or theta')
    eps: float = 0.0
    slack: float = DECAY_SLACK
    slope: float = float("nan")
    constant: float = float("nan")
    residual: float = float("nan")
    rows: list = field(default_factory=list)  # dicts: param, value_re, value_im, abs, bound
    envelope_ok: bool | None = None
    excluded: bool = False
    notes: str = ""

    @property
    def slope_ok(self) -> bool:
        if self.excluded or self.exponent is None:
            return False
        return bool(self.slope <= -(self.exponent - self.eps - self.slack))

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.envelope_ok is not False

    def summary(self) -> dict:
        return {"mode": self.mode, "exponent": self.exponent, "eps": self.eps, "slack": self.slack,
                "slope": self.slope, "constant": self.constant, "residual": self.residual,
                "envelope_ok": self.envelope_ok, "excluded": self.excluded, "pass": self.passed,
                "notes": self.notes}


def fit_loglog(x, y) -> tuple[float, float, float]:
    """Least-squares slope, constant and rms residual of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, icpt] - ly) ** 2)))
    return float(slope), float(np.exp(icpt)), resid


def weil_envelope(q: int) -> float:
    return 2 * tau(q) * sqrt(q) / euler_phi(q)


def decay_scan(mode: str, params, radius: int = 2, phi: ModularFunction | None = None,
               z: complex = 2j, tol: float = 1e-9) -> DecayTarget:
    """Scan one family over q (or m) and fit the decay.

    modes: "weyl" (d=2, n=1 joint sums, max over nonzero modes), "aq" (n=d=1,
    max over |N|,|M| <= radius), "hecke" (|T_m phi(z) - mu0 mean|), "const".
    """
    params = list(params)
    if mode == "const":
        rows = [{"param": q, "value_re": 1.0, "value_im": 0.0, "abs": 1.0, "bound": None} for q in params]
        t = DecayTarget(mode, None, rows=rows, excluded=True, notes="constant character does not decay")
        t.slope, t.constant, t.residual = 0.0, 1.0, 0.0
        return t
    rows = []
    env_ok = True
    if mode == "weyl":
        modes = default_modes_d2(radius)
        target = DecayTarget(mode, 0.5)
        for q in params:
            vals = weyl_joint_modes_d2(q, modes)
            i = int(np.argmax(np.abs(vals)))
            bound = weil_envelope(q)
            env_ok &= bool(abs(vals[i]) <= bound * (1 + tol))
            rows.append({"param": q, "value_re": vals[i].real, "value_im": vals[i].imag,
                         "abs": abs(vals[i]), "bound": bound})
    elif mode == "aq":
        target = DecayTarget(mode, 0.5)
        r = range(-radius, radius + 1)
        for q in params:
            rowsK = _k1_rows(q, sorted({M % q for M in r}))
            best = (0.0, 0j)
            for N in r:
                for M in r:
                    if N == 0 and M == 0:
                        continue
                    v = rowsK[M % q][N % q] / euler_phi(q)
                    if abs(v) > best[0]:
                        best = (abs(v), v)
            bound = weil_envelope(q)
            env_ok &= bool(best[0] <= bound * (1 + tol))
            rows.append({"param": q, "value_re": best[1].real, "value_im": best[1].imag,
                         "abs": best[0], "bound": bound})
    elif mode == "hecke":
        phi = phi or HeightIndicator(2.0)
        mean = phi.mu0_mean()
        target = DecayTarget(mode, 0.5 - THETA_KIM_SARNAK)
        for m in params:
            v = hecke_average(phi, m, z) - mean
            rows.append({"param": m, "value_re": v, "value_im": 0.0, "abs": abs(v), "bound": None})
        env_ok = None
    else:
        raise ValueError(f"unknown decay mode {mode!r}")
    xs = [r["param"] for r in rows if r["abs"] > 0]
    ys = [r["abs"] for r in rows if r["abs"] > 0]
    if len(xs) >= 2:
        target.slope, target.constant, target.residual = fit_loglog(xs, ys)
    target.rows = rows
    target.envelope_ok = env_ok
    return target


def hecke_improvement(phi: ModularFunction, early, late, z: complex = 2j) -> tuple[float, float, float]:
    """Mean |T_m phi(z) - mean| over two ranges of m, and their ratio early/late."""
    mean = phi.mu0_mean()
    e = float(np.mean([abs(hecke_average(phi, m, z) - mean) for m in early]))
    l = float(np.mean([abs(hecke_average(phi, m, z) - mean) for m in late]))
    return e, l, (e / l if l > 0 else float("inf"))


def primes_between(lo: int, hi: int) -> list[int]:
    return [p for p in range(max(2, lo), hi + 1) if is_prime(p)]
