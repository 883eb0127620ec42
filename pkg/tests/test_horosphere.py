import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from horopoints.horosphere import (
    Constant,
    HeightIndicator,
    SmoothBump,
    TrigPoly,
    TruncatedHeight,
    aq_direct,
    aq_expand,
    decay_scan,
    default_modes_d2,
    fit_loglog,
    hecke_average,
    hecke_dq_cosets,
    hecke_dq_formula,
    hecke_points,
    mu0_mean_quadrature,
    reduce_to_fd,
    weyl_joint,
    weyl_joint_direct,
    weyl_joint_modes_d2,
    weyl_sum,
)
from horopoints.kloosterman import kloos_brute
from horopoints.numtheory import euler_phi, mobius, sigma1
from horopoints.primitive import primitive_table


def test_weyl_sum_examples():
    assert weyl_sum(2, 1, 7, [0, 0]) == pytest.approx(1)
    assert weyl_sum(3, 2, 3, np.zeros((3, 2))) == pytest.approx(1)
    assert weyl_sum(2, 1, 2, [1, 0]) == pytest.approx(-1 / 3, abs=1e-15)


def test_weyl_sum_loop_oracle():
    q = 6
    R = primitive_table(3, 1, q).reshape(-1, 3)
    N = np.array([1, 2, 5])
    want = sum(cmath.exp(2j * math.pi * int(r @ N) / q) for r in R) / len(R)
    assert weyl_sum(3, 1, q, N) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_weyl_formula_matches_enumeration(d):
    rng = np.random.default_rng(d)
    for q in range(1, 51 if d == 2 else 16):
        for _ in range(3):
            N = rng.integers(-q, q + 1, d)
            a = weyl_sum(d, 1, q, N, method="formula")
            b = weyl_sum(d, 1, q, N, method="enum")
            assert abs(a - b) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.lists(st.integers(-20, 20), min_size=2, max_size=2), st.integers(-3, 3))
def test_weyl_sum_periodic_in_N(q, N, k):
    N = np.array(N)
    shifted = N + k * q * np.array([1, -2])
    assert abs(weyl_sum(2, 1, q, N, method="enum") - weyl_sum(2, 1, q, shifted, method="enum")) < 1e-12


def test_weyl_sum_decays_for_fixed_mode():
    vals = [abs(weyl_sum(2, 1, p, [1, 2])) for p in (101, 211, 401)]
    assert vals[0] > vals[1] > vals[2]


def test_aq_examples():
    one = TrigPoly.constant(1, 1)
    assert aq_direct(one, 7) == pytest.approx(1) and aq_expand(one, 7) == pytest.approx(1)
    for q in (2, 5, 6, 9, 10, 30):
        f = TrigPoly.of(1, 1, [([[1]], [[0]], 1.0)])
        assert aq_direct(f, q) == pytest.approx(mobius(q) / euler_phi(q), abs=1e-12)
    f = TrigPoly.of(1, 1, [([[1]], [[1]], 1.0)])
    assert aq_direct(f, 5).real == pytest.approx(0.0954915, abs=1e-7)
    assert aq_expand(f, 5) == pytest.approx(kloos_brute([[1]], [[1]], 5).value() / 4, abs=1e-12)


@pytest.mark.parametrize("q", [2, 3, 4, 5])
def test_aq_expand_equals_direct_n2(q):
    rng = np.random.default_rng([q, 2])
    for _ in range(5):
        f = TrigPoly.random(2, 2, 5, rng)
        a, b = aq_direct(f, q), aq_expand(f, q)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_trigpoly_rejects_repeated_frequency():
    with pytest.raises(ValueError):
        TrigPoly.of(1, 1, [([[1]], [[0]], 1.0), ([[1]], [[0]], 2.0)])


@pytest.mark.parametrize("d, n, q", [(2, 1, 2), (2, 1, 5), (2, 1, 6), (3, 1, 3), (3, 2, 2), (3, 2, 3)])
def test_weyl_joint_two_paths(d, n, q):
    rng = np.random.default_rng([d, n, q])
    assert weyl_joint(d, n, q, np.zeros((d, n)), np.zeros((n, d))) == pytest.approx(1)
    for _ in range(4):
        N = rng.integers(-3, 4, (d, n))
        M = rng.integers(-3, 4, (n, d))
        assert abs(weyl_joint(d, n, q, N, M) - weyl_joint_direct(d, n, q, N, M)) < 1e-12
        assert abs(weyl_joint(d, n, q, N, 0 * M) - weyl_sum(d, n, q, N)) < 1e-12


def test_weyl_joint_d2_q2_three_points():
    # S_2 = {(0,1), (1,0), (1,1)} with U = 1 at each; N.R = 1, 1, 0 and the M-phase is 1/2
    N, M = np.array([[1], [1]]), np.array([[0, 1]])
    want = ((-1) * (-1) + (-1) * (-1) + 1 * (-1)) / 3
    assert weyl_joint(2, 1, 2, N, M) == pytest.approx(want, abs=1e-12)
    assert weyl_joint_direct(2, 1, 2, N, M) == pytest.approx(want, abs=1e-12)


def test_weyl_joint_vectorized_modes():
    for q in (5, 7, 12):
        modes = default_modes_d2(1)
        fast = weyl_joint_modes_d2(q, modes)
        slow = [weyl_joint(2, 1, q, N, M) for N, M in modes]
        assert np.max(np.abs(fast - slow)) < 1e-12


def test_fd_reduction():
    pts = reduce_to_fd(np.array([0.3 + 0.01j, 5.7 + 0.2j, -3.49 + 2j, 1j]))
    assert np.all(np.abs(pts.real) <= 0.5 + 1e-12)
    assert np.all(np.abs(pts) >= 1 - 1e-12)
    with pytest.raises(ValueError):
        reduce_to_fd([1 - 1j])


def test_hecke_examples():
    o = hecke_points(1, 0.3 + 2j)
    assert len(o) == 1 and o.points[0] == pytest.approx(0.3 + 2j)
    o = hecke_points(2, 2j)
    assert len(o) == 3
    assert sorted(np.round(o.points, 12), key=lambda w: (w.imag, w.real)) == [1j, 0.5 + 1j, 4j]
    for p in (3, 5, 7, 11, 101):
        assert len(hecke_points(p, 2j)) == p + 1


@pytest.mark.parametrize("m", [1, 4, 6, 12, 30, 97])
def test_hecke_orbit_invariants(m):
    o = hecke_points(m, 0.1 + 1.7j)
    assert len(o.raw) == sigma1(m)
    assert np.all(np.abs(o.points.real) <= 0.5 + 1e-12) and np.all(np.abs(o.points) >= 1 - 1e-12)
    assert hecke_average(Constant(1.0), m, 0.1 + 1.7j) == 1.0


def test_mu0_means():
    assert HeightIndicator(2.0).mu0_mean() == pytest.approx(3 / (2 * math.pi), abs=1e-15)
    assert mu0_mean_quadrature(HeightIndicator(2.0)) == pytest.approx(3 / (2 * math.pi), abs=1e-8)
    assert mu0_mean_quadrature(Constant(1.0)) == pytest.approx(1.0, abs=1e-8)
    # min(y, Y)^s: closed form is (3/pi) [int_{fd, y<1} + int_1^Y y^{s-2} + Y^{s-1}]
    s, Y = 0.5, 4.0
    low = mu0_mean_quadrature(TruncatedHeight(s, 1.0))
    closed = low + 3 / math.pi * ((Y ** (s - 1) - 1) / (s - 1) + Y ** (s - 1) - 1.0)
    assert mu0_mean_quadrature(TruncatedHeight(s, Y)) == pytest.approx(closed, abs=1e-8)
    assert 0 < SmoothBump().mu0_mean() < 1


@pytest.mark.parametrize("q", [2, 3, 4, 5, 6, 8, 9, 12, 25])
def test_hecke_dq_formula_matches_cosets(q):
    for phi in (TruncatedHeight(0.5, 4.0), SmoothBump(1.2j, 0.5)):
        assert hecke_dq_formula(phi, q, 2j) == pytest.approx(hecke_dq_cosets(phi, q, 2j), abs=1e-12)


def test_fit_loglog_recovers_power():
    x = np.array([2.0, 4, 8, 16, 32])
    slope, c, resid = fit_loglog(x, 3 * x**-0.5)
    assert slope == pytest.approx(-0.5) and c == pytest.approx(3) and resid < 1e-12


def test_decay_scan_modes():
    t = decay_scan("const", [2, 3, 5])
    assert t.excluded and not t.passed and t.slope == 0.0
    t = decay_scan("aq", range(2, 80))
    assert t.envelope_ok and t.slope < -0.35
    t = decay_scan("weyl", [p for p in range(3, 60) if all(p % k for k in range(2, p))])
    assert t.envelope_ok
    assert {"param", "value_re", "value_im", "abs", "bound"} <= set(t.rows[0])
    with pytest.raises(ValueError):
        decay_scan("nope", [2])
