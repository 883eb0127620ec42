import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from horopoints.errors import NotPrimitive
from horopoints.modring import IntMatrix, ModMatrix, count_gl, gl_table
from horopoints.numtheory import factor
from horopoints.primitive import (
    check_completion,
    check_mtx_relation,
    check_mtx_relation_batch,
    complete_to_sl,
    coset_count,
    coset_reps,
    horosphere_point,
    is_primitive,
    mtx_relation_matrix,
    param_bij,
    primitive_count,
    primitive_count_enum,
    primitive_table,
    verify_bijection,
)


def test_is_primitive_examples():
    assert not is_primitive([[2], [0]], 4)
    assert is_primitive([[2], [1]], 4)
    R = np.array([[1, 0], [0, 1], [3, 2]])
    assert oracles.rank_mod_p(R.tolist(), 2) == 2 and oracles.rank_mod_p(R.tolist(), 3) == 2
    assert is_primitive(R, 6)
    assert not is_primitive([[2, 0], [0, 3], [4, 3]], 6)


def test_is_primitive_matches_rank_oracle():
    q = 6
    for R in oracles.all_mats(2, 1, q):
        want = all(oracles.rank_mod_p(R, p) == 1 for p, _ in factor(q))
        assert is_primitive(R, q) == want


@pytest.mark.parametrize("d, n, q, expected", [(2, 1, 2, 3), (2, 1, 4, 12), (3, 2, 2, 42)])
def test_primitive_count_examples(d, n, q, expected):
    assert primitive_count(d, n, q) == expected == primitive_count_enum(d, n, q)


@pytest.mark.parametrize("d, n", [(2, 1), (3, 1), (2, 2), (3, 2)])
def test_primitive_count_small_q(d, n):
    for q in range(1, 7):
        assert primitive_count(d, n, q) == primitive_count_enum(d, n, q)


@pytest.mark.parametrize("q1, q2", [(2, 3), (3, 4), (5, 2), (4, 9)])
def test_primitive_count_multiplicative(q1, q2):
    for d, n in [(2, 1), (3, 1), (3, 2), (3, 3)]:
        assert primitive_count(d, n, q1 * q2) == primitive_count(d, n, q1) * primitive_count(d, n, q2)


def test_square_primitive_is_gl():
    for q in (2, 3, 4, 6):
        assert primitive_count(2, 2, q) == count_gl(2, q)
        assert len(primitive_table(2, 2, q)) == len(gl_table(2, q)[0])


@pytest.mark.parametrize("d, n, q, expected", [(2, 1, 2, 3), (2, 1, 3, 4), (2, 1, 4, 6), (3, 1, 2, 7)])
def test_coset_counts(d, n, q, expected):
    reps = coset_reps(d, n, q)
    assert len(reps) == expected == coset_count(d, n, q)
    assert all(r.gamma.det() == 1 for r in reps)


def test_square_case_single_rep():
    (rep,) = coset_reps(3, 3, 5)
    assert rep.gamma == IntMatrix.identity(3)


@pytest.mark.parametrize("d, n, q", [(2, 1, 6), (3, 1, 4), (3, 2, 4), (3, 2, 6)])
def test_coset_reps_inequivalent(d, n, q):
    # gamma_i gamma_j^{-1} must not lie in the block congruence subgroup for i != j
    reps = coset_reps(d, n, q)
    for i, a in enumerate(reps):
        for b in reps[i + 1:]:
            h = np.array((a.gamma @ b.gamma_inv).entries, dtype=object)
            assert np.any(h[: d - n, d - n:] % q)


def test_param_bij_examples():
    pb = param_bij(2, 2, 5)
    U = np.array([[1, 2], [3, 4]])
    assert pb.forward(0, U).array().tolist() == U.tolist()
    k, V = pb.inverse(U)
    assert k == 0 and V.array().tolist() == U.tolist()
    pb = param_bij(2, 1, 2)
    images = {tuple(pb.forward(k, [[1]]).array().flat) for k in range(len(pb.reps))}
    assert images == {(0, 1), (1, 0), (1, 1)}
    pb = param_bij(3, 2, 3)
    assert len(pb.reps) * count_gl(2, 3) == primitive_count(3, 2, 3) == 624


def test_param_bij_inverse_rejects_nonprimitive():
    with pytest.raises(NotPrimitive):
        param_bij(3, 2, 4).inverse(np.array([[2, 0], [0, 2], [2, 2]]))


@pytest.mark.parametrize("d, n, q", [(2, 1, 6), (3, 1, 5), (3, 2, 4), (2, 2, 6)])
def test_param_bij_round_trips(d, n, q):
    pb = param_bij(d, n, q)
    X, _ = gl_table(n, q)
    rng = np.random.default_rng([d, n, q])
    for _ in range(50):
        k = int(rng.integers(len(pb.reps)))
        U = X[rng.integers(len(X))]
        R = pb.forward(k, U)
        assert is_primitive(R.array(), q)
        k2, U2 = pb.inverse(R.array())
        assert k2 == k and np.array_equal(U2.array(), U)
    for R in primitive_table(d, n, q)[::7]:
        k, U = pb.inverse(R)
        assert np.array_equal(pb.forward(k, U.array()).array(), R)


@pytest.mark.parametrize("d, n, q", [(2, 1, q) for q in range(1, 7)] + [(3, 2, 2), (3, 2, 3), (3, 3, 2), (2, 2, 4), (3, 3, 1), (2, 2, 1)])
def test_verify_bijection_small(d, n, q):
    rep = verify_bijection(d, n, q)
    assert rep.ok
    assert rep.pairs == rep.primitive == primitive_count(d, n, q)


def test_mtx_relation_examples():
    # n = d, gamma = I: the block relation is U^{-1} U = I mod q
    for q in (2, 5, 12):
        X, _ = gl_table(2, q)
        for U in X[:: max(1, len(X) // 20)]:
            assert check_mtx_relation(IntMatrix.identity(2), U, q)
    for d, n, q in [(2, 1, 2), (3, 2, 2)]:
        X, _ = gl_table(n, q)
        pairs = [(r, U) for r in coset_reps(d, n, q) for U in X]
        assert len(pairs) == primitive_count(d, n, q)
        assert all(check_mtx_relation(r, U, q) for r, U in pairs)


def test_mtx_relation_batch_agrees_with_exact():
    for d, n, q in [(2, 1, 6), (3, 2, 4), (3, 1, 5)]:
        X, Xinv = gl_table(n, q)
        for r in coset_reps(d, n, q)[:5]:
            batch = check_mtx_relation_batch(r.gamma, X, Xinv, q)
            exact = [check_mtx_relation(r, U, q) for U in X]
            assert batch.tolist() == exact


def test_mtx_relation_detects_wrong_inverse():
    q = 5
    X, Xinv = gl_table(2, q)
    wrong = np.roll(Xinv, 1, axis=0)
    ok = check_mtx_relation_batch(IntMatrix.identity(2), X, wrong, q)
    assert not ok.all()
    (r,) = [c for c in coset_reps(3, 1, 3) if c.id == 1]
    X1, X1inv = gl_table(1, 3)
    assert not check_mtx_relation_batch(r.gamma, X1, (X1inv + 1) % 3, 3).any()


def test_completion_examples():
    eta = complete_to_sl([[1], [0]], 2)
    assert eta.det() == 1 and check_completion(eta, [[1], [0]], 2)
    P = horosphere_point([[1], [0]], 2)
    prod = np.array(eta.entries, dtype=float) @ P.matrix
    assert np.allclose(prod[:2, 2:], 0, atol=1e-12) and abs(prod[2, 2] - 1) < 1e-12
    U = np.array([[1, 2], [3, 1]])
    eta = complete_to_sl(U, 7)
    assert check_completion(eta, U, 7)
    assert np.array_equal(np.array(eta.entries)[:2, :2], 7 * np.eye(2, dtype=int))
    R = np.array([[1, 0], [0, 1], [4, 5]])
    assert check_completion(complete_to_sl(R, 6), R, 6)
    with pytest.raises(NotPrimitive):
        complete_to_sl([[2], [4]], 6)


@pytest.mark.parametrize("d, n, q", [(2, 1, 4), (2, 1, 6), (3, 1, 3), (3, 2, 2), (2, 2, 4), (3, 2, 3)])
def test_completion_every_primitive(d, n, q):
    for R in primitive_table(d, n, q):
        assert check_completion(complete_to_sl(R, q), R, q)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_completion_random_large_q(q, seed):
    rng = np.random.default_rng(seed)
    R = rng.integers(0, q, (3, 2))
    if not is_primitive(R, q):
        return
    eta = complete_to_sl(R, q)
    assert check_completion(eta, R, q)
    P = horosphere_point(R, q)
    prod = np.array(eta.entries, dtype=float) @ P.matrix
    assert np.allclose(prod[:3, 3:], 0, atol=1e-9)
    assert np.allclose(prod[3:, 3:], np.eye(2), atol=1e-9)


def test_horosphere_point_examples():
    with pytest.raises(NotPrimitive):
        horosphere_point([[0], [0]], 3)
    P = horosphere_point([[1], [1]], 3)
    assert abs(np.linalg.det(P.matrix) - 1) < 1e-12
    assert np.allclose(P.matrix[:2, :2], 3 ** (-0.5) * np.eye(2))
    P1 = horosphere_point([[0], [0]], 1)
    assert np.allclose(P1.matrix, np.eye(3))
    assert abs(np.linalg.det(P.Dq) - 1) < 1e-12
