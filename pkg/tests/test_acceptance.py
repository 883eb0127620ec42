"""Acceptance gate: one group of tests per criterion, summarized at the end of the run."""
import math
import time

import numpy as np
import pytest

from horopoints import geomnum as G
from horopoints import kloosterman as K
from horopoints import primitive as P
from horopoints import rankcount as RC
from horopoints import smallsol as S
from horopoints.horosphere import (
    HeightIndicator,
    TrigPoly,
    aq_direct,
    aq_expand,
    decay_scan,
    hecke_improvement,
    primes_between,
)
from horopoints.modring import all_matrices, count_gl
from horopoints.numtheory import factor
from horopoints.rng import stream

from oracles import successive_minima_brute

pytestmark = pytest.mark.acceptance


def crit(k, label):
    return pytest.mark.criterion(k, label)


DN = [(2, 1), (3, 1), (2, 2), (3, 2), (3, 3)]
Q12 = range(1, 13)

# ---------------------------------------------------------------- 1. counts

C1 = crit(1, "exact counting of primitive and invertible matrices")


@C1
def test_c1_primitive_and_gl_counts():
    t0 = time.perf_counter()
    for d, n in DN:
        for q in Q12:
            assert P.primitive_count(d, n, q) == P.primitive_count_enum(d, n, q), (d, n, q)
    for n in (1, 2):
        for q in range(1, 17):
            assert count_gl(n, q) == P.gl_count_enum(n, q), (n, q)
    assert time.perf_counter() - t0 < 30


# ------------------------------------------------------------- 2. bijection

C2 = crit(2, "coset x GL parametrization is a bijection onto primitive matrices")


@C2
@pytest.mark.slow
@pytest.mark.parametrize("d,n", DN)
def test_c2_bijection(d, n):
    for q in Q12:
        rep = P.verify_bijection(d, n, q)
        assert rep.lands_in_Rq and rep.injective and rep.surjective and rep.relation_ok, (d, n, q)
        assert rep.pairs == rep.primitive == P.primitive_count(d, n, q)


# ----------------------------------------------------- 3. Kloosterman routes

C3 = crit(3, "Kloosterman sum routes agree with brute force")


@C3
@pytest.mark.parametrize("q", [6, 10, 12, 15, 36])
@pytest.mark.parametrize("n", [1, 2])
def test_c3_crt_route(q, n):
    rng = stream(2024, n, q)
    for _ in range(100):
        A, B = rng.integers(0, q, (2, n, n))
        brute = K.kloos_brute(A, B, q)
        assert abs(K.kloos_crt(A, B, q) - brute.value()) <= 1e-9 * max(1.0, abs(brute.value()))


PRIME_POWERS = [(p, b) for p in (2, 3, 5) for b in range(2, 6) if p**b <= 27]


@C3
@pytest.mark.parametrize("p,beta", PRIME_POWERS)
@pytest.mark.parametrize("n", [1, 2])
def test_c3_prime_power_route(p, beta, n):
    q = p**beta
    Ms = all_matrices(n, n, q)
    Ms = Ms[np.any(Ms % p, axis=(1, 2))]  # the route's domain: A, B nonzero mod p
    if n == 2:
        Ms = Ms[stream(7, p, beta).choice(len(Ms), size=min(len(Ms), 30), replace=False)]
    for A in Ms:
        for B in Ms:
            # exact equality as elements of Z[e(1/q)]; raw histograms are not unique
            fast, slow = K.kloos_primepower(A, B, p, beta), K.kloos_brute(A, B, q)
            assert fast.same_as(slow), (A.tolist(), B.tolist())


@C3
@pytest.mark.parametrize("pm", [2, 3, 4, 5, 7, 8, 9, 11, 13, 16, 17, 19, 23, 25, 27])
@pytest.mark.parametrize("n", [1, 2])
def test_c3_ramanujan_closed_form(pm, n):
    (p, m), = factor(pm)
    table = K.kloos_zero_table(n, pm).reshape(-1)
    Z = np.zeros((n, n), dtype=np.int64)
    Ms = all_matrices(n, n, pm)
    if len(Ms) <= 2000:  # cross-check the table against brute force where cheap
        for A, v in zip(Ms, table):
            assert K.kloos_brute(Z, A, pm).as_integer() == v
    for A, v in zip(Ms, table):
        assert K.ramanujan_eval(A, p, m) == v


# ------------------------------------------------------------ 4. bound suite

C4 = crit(4, "exponential sum bounds with explicit constants")


@C4
def test_c4_prime_modulus_bound():
    reps = K.scan_prime_modulus_bound(2, 2) + K.scan_prime_modulus_bound(2, 3)
    reps += K.scan_prime_modulus_bound(2, 5, samples=10_000, seed=1) + K.scan_prime_modulus_bound(2, 7, samples=10_000, seed=1)
    assert all(r.passed for r in reps), [r.to_record() for r in reps if not r.passed]


@C4
def test_c4_gauss_sum_bound():
    reps = [r for p in primes_between(2, 13) for r in K.scan_gauss_sum_bound(1, p)]
    reps += K.scan_gauss_sum_bound(2, 2) + K.scan_gauss_sum_bound(2, 3)
    assert all(r.passed for r in reps), [r.to_record() for r in reps if not r.passed]


@C4
def test_c4_anticommutant_dimension():
    reps = [r for n in (1, 2, 3) for p in (2, 3) for r in K.scan_anticommutant_dim(n, p)]
    assert all(r.passed for r in reps), [r.to_record() for r in reps if not r.passed]


@C4
def test_c4_degenerate_sum_bound():
    reps = [r for n in (1, 2) for q in range(1, 28) for r in K.scan_ramanujan_bound(n, q)]
    assert all(r.passed for r in reps), [r.to_record() for r in reps if not r.passed]


# ------------------------------------------------------ 5. expansion oracle

C5 = crit(5, "character expansion of the coset average equals direct evaluation")


@C5
@pytest.mark.parametrize("n,qs", [(1, "sample"), (2, (2, 3, 4, 5, 8, 9))])
def test_c5_aq_expand_vs_direct(n, qs):
    rng = stream(55, n)
    if qs == "sample":
        qs = sorted(rng.choice(np.arange(2, 101), size=12, replace=False).tolist()) + [100]
    for q in qs:
        for _ in range(50):
            f = TrigPoly.random(n, n, 4, rng)
            a, b = aq_expand(f, q), aq_direct(f, q)
            assert abs(a - b) <= 1e-9 * max(1.0, abs(b)), (q, a, b)


# ----------------------------------------------------------- 6. decay trends

C6 = crit(6, "decay trends of Weyl sums and Hecke averages")


@C6
def test_c6_weyl_decay():
    t = decay_scan("weyl", primes_between(2, 500))
    assert t.envelope_ok
    assert t.slope <= -0.35


@C6
def test_c6_hecke_improvement():
    _, _, ratio = hecke_improvement(HeightIndicator(2.0), primes_between(2, 20), primes_between(200, 500))
    assert ratio >= 3


# ---------------------------------------------------- 7. geometry of numbers

C7 = crit(7, "successive minima, phi scaling and the planar mean value formula")


def _covering_k(g):
    rho = np.linalg.norm(g, axis=1).max()
    return int(np.ceil(rho * np.linalg.norm(np.linalg.inv(g), axis=0).max()))


@C7
def test_c7_minima_battery():
    cases = G.lattice_battery(20, seed=0)
    assert len(cases) == 20
    for L in cases:
        ref = successive_minima_brute(L.g, _covering_k(L.g))
        assert np.allclose(G.successive_minima(L), ref, rtol=0, atol=1e-9)


@C7
def test_c7_phi_scaling():
    for L in G.lattice_battery(6, seed=1):
        kappa = 2 * L.dim + 1
        base = G.phi_eval(L, 1, 0.7, 1.3, kappa).value
        for r in (0.25, 3.0, 40.0):
            assert G.phi_eval(L, 1, 0.7 * r, 1.3 * r, kappa).value == pytest.approx(base / r, rel=1e-9)


@C7
@pytest.mark.parametrize("rho", [G.Density.ball(2.0), G.Density.box((0, 0), (1, 3)),
                                 G.Density.sup_power(1, 1, 4, 10)], ids=["ball", "box", "sup_power"])
def test_c7_siegel_mean(rho):
    t0 = time.perf_counter()
    rep = G.siegel_check_d2(rho, samples=100_000, seed=11)
    assert rep.passed, rep.to_record()
    assert time.perf_counter() - t0 < 60


# ---------------------------------------------------------- 8. rank counting

C8 = crit(8, "rank counting lower bounds and pruned = naive")


@C8
@pytest.mark.parametrize("p", [3, 5, 7, 11])
def test_c8_rank_counts(p):
    for b in range(1, (p - 1) // 2 + 1):
        q = RC.RankCountQuery(3, 2, 1, p, b)
        N = RC.count_rank(q)
        assert N == RC.count_rank_naive(3, 2, p, b, 1), b
        rep = RC.check_lower_bounds(q, N)
        assert rep.first_ok and rep.second_ok, b


# ---------------------------------------------------------- 9. grid identity

C9 = crit(9, "solution sets of congruences are grids")


@C9
def test_c9_grid_identity():
    cases = S.grid_battery(100, seed=0, max_d=3, max_q=20, boxes=5)
    assert len(cases) == 100
    pairs = S.check_grid_identity(cases)
    assert len(pairs) == 500
    assert all(a == b for a, b in pairs)


# ------------------------------------------------------------ 10. limit law

C10 = crit(10, "solution count distribution converges to the grid limit law")
OMEGA = G.BoxRegion.of([((-1, -1), (1, 1))])


@pytest.fixture(scope="module")
def limit_law():
    return S.limit_constant_mc(OMEGA, "nonzero", r_max=6, samples=100_000, seed=10)


@C10
@pytest.mark.parametrize("q", [101, 211])
def test_c10_distribution_matches_limit(q, limit_law):
    h = S.hist_distribution(2, 1, q, OMEGA, (1,), r_max=6)
    rows = S.compare_to_limit(h, limit_law)
    bad = [(r.r, round(r.p_q, 4), round(r.c_mc, 4), round(r.stderr, 4)) for r in rows if not r.passed]
    assert not bad, f"(r, P_q, c_MC, combined stderr) outside 3 sigma: {bad}"


@C10
@pytest.mark.parametrize("q", [50, 100, 101, 211])
def test_c10_mean_near_volume(q):
    h = S.hist_distribution(2, 1, q, OMEGA, (1,), r_max=6)
    assert abs(h.mean - 4) <= 0.05 * 4, f"mean {h.mean:.4f} at q={q}"


# ----------------------------------------------------------- 11. determinism

C11 = crit(11, "outputs identical across 1, 4 and 16 threads")
THREADS = (1, 4, 16)


def _same_across_threads(fn):
    outs = [fn(t) for t in THREADS]
    return all(o == outs[0] for o in outs[1:])


@C11
def test_c11_kloosterman_histogram():
    A, B = np.array([[1, 2], [3, 5]]), np.array([[2, 0], [1, 1]])
    assert _same_across_threads(lambda t: K.kloos_brute(A, B, 12, threads=t).counts.tobytes())


@C11
def test_c11_primitive_enumeration():
    assert _same_across_threads(lambda t: P.primitive_table(3, 2, 6, threads=t).tobytes())
    assert _same_across_threads(lambda t: P.primitive_count_enum(3, 2, 12, threads=t))


@C11
def test_c11_rank_counts():
    assert _same_across_threads(lambda t: RC.count_by_rank(3, 2, 7, 3, threads=t))


@C11
def test_c11_histograms():
    assert _same_across_threads(lambda t: S.hist_distribution(2, 1, 53, OMEGA, (1,), threads=t).counts)
    assert _same_across_threads(
        lambda t: S.hist_distribution(2, 2, 7, G.BoxRegion.of([((-1,) * 2, (1,) * 2)]), (1, 0), mode="sample",
                                      samples=3000, seed=5, threads=t).counts)


@C11
def test_c11_monte_carlo():
    assert _same_across_threads(lambda t: G.siegel_check_d2(G.Density.ball(2.0), 20_000, seed=4, threads=t).mean)
    assert _same_across_threads(
        lambda t: S.limit_constant_mc(OMEGA, samples=20_000, seed=4, threads=t).probs.tobytes())


@C11
def test_c11_cli_records():
    from horopoints.cli import HANDLERS, parse_args

    def run(t):
        args = parse_args(["rank", "--p", "3,5,7", "--threads", str(t)])
        return [(r.key, r.to_json().split('"timestamp"')[0]) for r in HANDLERS[args.cmd](args)]

    assert _same_across_threads(run)


def test_sanity_helpers():
    assert _covering_k(np.eye(3)) == 1
    assert math.isclose(OMEGA.volume(), 4.0)
