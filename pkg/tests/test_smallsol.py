import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from horopoints.errors import NotPrimitive, PreconditionViolated
from horopoints.geomnum import BoxRegion, count_points
from horopoints.smallsol import (
    CongruenceInstance,
    check_grid_identity,
    compare_to_limit,
    count_solutions,
    grid_battery,
    grid_construct,
    grid_gamma,
    hist_distribution,
    integer_points,
    inverse_experiment,
    joint_frequency,
    joint_limit_mc,
    limit_constant_mc,
    sample_primitive,
    scaled_contains,
)
from horopoints.geomnum import worker_rng

SQ = BoxRegion.of([((-1, -1), (1, 1))])


def box(lo, hi):
    return BoxRegion.of([(lo, hi)])


def brute_solutions(R, b, q, region, n, d, K=12):
    """Plain loop over a large integer cube, float membership with the scale applied."""
    s = q ** (n / d)
    hits = 0
    for x in product(range(-K, K + 1), repeat=d):
        y = [xi / s for xi in x]
        if any(all(lo[j] <= y[j] < hi[j] for j in range(d)) for lo, hi in region.boxes):
            if all(sum(x[i] * R[i][k] for i in range(d)) % q == b[k] % q for k in range(n)):
                hits += 1
    return hits


def test_count_examples():
    inst = CongruenceInstance(2, 1, 3, [[1], [1]], (1,), box((0, 0), (2, 2)))
    assert count_solutions(inst) == brute_solutions([[1], [1]], (1,), 3, box((0, 0), (2, 2)), 1, 2) == 5
    tiny = box((-0.1, -0.1), (0.1, 0.1))
    assert count_solutions(CongruenceInstance(2, 1, 7, [[2], [3]], 0, tiny)) == 1
    # q = 1: the congruence is vacuous
    region = box((-1.5, -0.5), (2, 1.2))
    inst = CongruenceInstance(2, 1, 1, [[0], [0]], (0,), region)
    assert count_solutions(inst) == len(integer_points(region, 1, 1, 2))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 11), st.integers(0, 11), st.integers(-5, 5))
def test_count_against_brute(q, r1, r2, b):
    R = [[r1 % q], [r2 % q]]
    if math.gcd(math.gcd(r1, r2), q) != 1:
        return
    region = box((-1, -0.5), (1.5, 1))
    assert count_solutions(CongruenceInstance(2, 1, q, R, (b,), region)) == brute_solutions(R, (b,), q, region, 1, 2)


def test_zero_rhs_counts_origin():
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = int(rng.integers(2, 30))
        R = rng.integers(0, q, size=(3, 1))
        if math.gcd(math.gcd(*map(int, R.ravel())), q) != 1:
            continue
        assert count_solutions(CongruenceInstance(3, 1, q, R, 0, box((-0.3,) * 3, (0.4,) * 3))) >= 1


def test_instance_validation():
    with pytest.raises(NotPrimitive):
        CongruenceInstance(2, 1, 4, [[2], [2]], (1,), SQ)
    with pytest.raises(PreconditionViolated):
        CongruenceInstance(2, 1, 5, [[1], [2]], (0,), box((0, 0), (1, 1)))


def test_grid_example_kernel_basis():
    G = grid_construct([[1], [1]], 0, 3)
    expected = np.array([[1, -1], [0, 3]])
    T = G.A @ np.linalg.inv(expected)
    assert np.allclose(T, np.rint(T)) and abs(round(np.linalg.det(T))) == 1
    assert round(np.linalg.det(G.A)) == 3
    assert abs(np.linalg.det(G.grid().lattice.g) - 1) < 1e-12


def test_grid_bezout_and_gamma():
    for case in grid_battery(30, seed=4):
        G = grid_construct(case.R, case.b, case.q)
        assert round(np.linalg.det(G.A.astype(float))) == case.q**case.n
        assert np.all((G.C @ case.R - np.eye(case.n, dtype=int)) % case.q == 0)
        assert np.all((G.A @ case.R) % case.q == 0)
        gam = grid_gamma(G, case.R)
        assert round(np.linalg.det(gam.astype(float))) == 1


def test_grid_depends_on_class_of_b():
    R = [[2], [5], [1]]
    region = box((-1, -1, -1), (1, 1, 1))
    a = grid_construct(R, 4, 7)
    b = grid_construct(R, 4 + 3 * 7, 7)
    assert a.count(region) == b.count(region)
    assert np.all((a.offset - b.offset) @ np.array(R) % 7 == 0)


def test_grid_identity_battery():
    pairs = check_grid_identity(grid_battery(40, seed=1))
    assert all(a == b for a, b in pairs)


def test_grid_float_route_agrees():
    for case in grid_battery(15, seed=2):
        if case.d < 2:
            continue
        G = grid_construct(case.R, case.b, case.q)
        for region in case.boxes:
            assert count_points(G.grid(), region) == G.count(region)


def test_scaled_membership_exact_on_boundary():
    # q = 4, n = 1, d = 2: scale is exactly 2, so x = 2 sits on the boundary of [0, 1)
    X = np.array([[0, 0], [2, 0], [1, 1], [-1, 0]])
    assert scaled_contains(X, box((0, 0), (1, 1)), 4, 1, 2).tolist() == [True, False, True, False]
    # q = 8, d = 3: 8^{1/3} = 2 exactly while the float power may not be
    X = np.array([[2, 0, 0], [1, 0, 0]])
    assert scaled_contains(X, box((1, 0, 0), (2, 1, 1)), 8, 1, 3).tolist() == [True, False]


def test_histogram_q2_three_points():
    h = hist_distribution(2, 1, 2, box((-1.1, -1.1), (1.1, 1.1)), 0, r_max=6)
    assert h.total == 3
    assert h.counts[3] == 2 and h.counts[5] == 1
    assert sum(h.counts) == 3 and h.probs.sum() == pytest.approx(1)


@pytest.mark.parametrize("q", [5, 12, 25])
def test_histogram_sums_to_one(q):
    h = hist_distribution(2, 1, q, SQ, 1)
    assert h.probs.sum() == pytest.approx(1) and sum(h.counts) == h.total


def test_histogram_mean_is_exact_average():
    q = 13
    h = hist_distribution(2, 1, q, SQ, 1, r_max=40)
    from horopoints.primitive import primitive_table

    sols = [count_solutions(CongruenceInstance(2, 1, q, R, (1,), SQ)) for R in primitive_table(2, 1, q)]
    assert h.solution_sum == sum(sols) and h.counts == [sols.count(r) for r in range(41)] + [0]


@pytest.mark.parametrize("q", [23, 53, 101, 211])
def test_histogram_mean_prime_closed_form(q):
    # each nonzero x mod a prime q solves x R = 1 for exactly q vectors R
    h = hist_distribution(2, 1, q, SQ, 1)
    m = math.isqrt(q)
    inside = (2 * m + 1) ** 2  # -m..m in each coordinate, since sqrt(q) is irrational
    assert Fraction(h.solution_sum, h.total) == Fraction((inside - 1) * q, q * q - 1)
    assert abs(h.mean - 4) <= (8 * math.sqrt(q) + 2) / q


def test_histogram_monotone_in_region():
    small = box((-0.5, -0.5), (0.5, 0.7))
    big = box((-0.6, -0.9), (1.0, 0.7))
    assert hist_distribution(2, 1, 23, small, 3).mean <= hist_distribution(2, 1, 23, big, 3).mean


def test_torus_restriction():
    U = BoxRegion.of([((0, 0), (0.5, 1))])
    h = hist_distribution(2, 1, 11, SQ, 1, U=U)
    # first entry of R in [0, 5.5): residues 0..5
    assert h.total == sum(1 for a in range(6) for b in range(11) if (a, b) != (0, 0))


def test_sampled_mode_agrees_with_exhaustive():
    ex = hist_distribution(2, 1, 31, SQ, 1, r_max=8)
    sm = hist_distribution(2, 1, 31, SQ, 1, r_max=8, mode="sample", samples=20_000, seed=3)
    assert not ex.stderr().any()
    se = np.sqrt(ex.probs * (1 - ex.probs) / sm.total)
    assert np.all(np.abs(ex.probs - sm.probs) <= 3 * se + 1e-12)


def test_sampler_respects_constraints():
    U = BoxRegion.of([((0, 0, 0, 0), (0.5, 0.5, 1, 1))])
    R = sample_primitive(worker_rng(1, 0), 2, 2, 6, 300, U)
    from horopoints.primitive import is_primitive

    assert len(R) == 300 and all(is_primitive(r, 6) for r in R)
    assert np.all(R[:, 0, :] < 3)


def test_limit_constant_tiny_region_lattice():
    tiny = box((-0.1, -0.1), (0.1, 0.1))
    lim = limit_constant_mc(tiny, "zero", samples=20_000, seed=2)
    # r = 1 is the origin alone; by the mean value formula the nonzero part has mean vol = 0.04
    assert 1 - 0.04 - 3 * lim.stderr()[1] <= lim.value(1) <= 1
    assert lim.counts[0] == 0 and lim.probs.sum() == pytest.approx(1)


def test_limit_constant_grid_mean_is_volume():
    lim = limit_constant_mc(SQ, "nonzero", samples=40_000, seed=8)
    assert abs(lim.mean - 4) <= 3 * lim.mean_stderr
    assert np.all((lim.probs >= 0) & (lim.probs <= 1))


def test_limit_thread_independent():
    a = limit_constant_mc(SQ, samples=3000, seed=1, threads=1)
    b = limit_constant_mc(SQ, samples=3000, seed=1, threads=4)
    assert a.counts == b.counts


def test_compare_rows_shape():
    h = hist_distribution(2, 1, 29, SQ, 1)
    lim = limit_constant_mc(SQ, samples=2000, seed=0)
    rows = compare_to_limit(h, lim)
    assert [r.r for r in rows] == list(range(7))
    assert all(r.stderr > 0 for r in rows)


def test_joint_frequency_single_spec_matches_histogram():
    h = hist_distribution(2, 1, 17, SQ, 1)
    assert joint_frequency(2, 1, 17, [(SQ, 1, 4)]) == Fraction(h.counts[4], h.total)


def test_joint_limit_single_matches_marginal():
    p, se = joint_limit_mc([(SQ, 1, 4)], samples=20_000, seed=6)
    lim = limit_constant_mc(SQ, samples=20_000, seed=6)
    assert p == pytest.approx(lim.value(4))


def test_inverse_full_torus_and_half():
    full = BoxRegion.of([((0,), (1,))])
    assert inverse_experiment(1, 37, full, 5) == 1
    assert inverse_experiment(2, 5, BoxRegion.of([((0, 0), (1, 1))]), [1, 2]) == 1
    for q in (101, 211, 499):
        assert abs(float(inverse_experiment(1, q, BoxRegion.of([((0,), (0.5,))]), 1)) - 0.5) < 2 / q


@pytest.mark.parametrize("q,u", [(11, 3), (13, 5), (9, 2)])
def test_inverse_unit_multiple(q, u):
    omega = BoxRegion.of([((0.1,), (0.45,))])
    assert inverse_experiment(1, q, omega, 2) == inverse_experiment(1, q, omega, 2 * u)
    omega2 = BoxRegion.of([((0.1, 0.2), (0.6, 0.9))])
    if q < 12:
        assert inverse_experiment(2, q, omega2, [1, 3]) == inverse_experiment(2, q, omega2, [u, 3 * u])
