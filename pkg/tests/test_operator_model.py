import numpy as np
import pytest
from hypothesis import given, strategies as st

from opcalc.operator_model import (CommutingTuple, iterated_commutator, jbracket, make_commuting_tuple,
                                   matrix_from_json, matrix_to_json, op_norm, random_operator,
                                   resolvent_kernel, spectral_apply, weight)


def diag_tuple(*diags):
    lam = np.array(diags, dtype=float).T
    return CommutingTuple(np.eye(lam.shape[0]), lam)


def test_zero_spectrum_tuple():
    A = make_commuting_tuple(1, 1, 1, spectrum_scale=0.0)
    assert np.allclose(A[1], [[0.0]])


@pytest.mark.parametrize("nu, d", [(1, 5), (2, 6), (3, 4)])
def test_random_tuples_satisfy_invariants(nu, d):
    A = make_commuting_tuple(3, nu, d, 2.0)
    assert A.invariant_violations() == []


def test_same_seed_is_bit_identical():
    a, b = make_commuting_tuple(7, 2, 5), make_commuting_tuple(7, 2, 5)
    assert a.basis.tobytes() == b.basis.tobytes()
    assert a.spectrum.tobytes() == b.spectrum.tobytes()


def test_iterated_commutator_examples():
    A = diag_tuple([0.0, 1.0])
    B = np.array([[0, 1], [1, 0]], dtype=complex)
    assert np.allclose(iterated_commutator(A, B, (0,)), B)
    assert np.allclose(iterated_commutator(A, B, (1,)), [[0, 1], [-1, 0]])
    D = diag_tuple([1.0, 2.0, 3.0], [0.0, 1.0, 5.0])
    assert np.allclose(iterated_commutator(D, np.diag([1.0, 4.0, 2.0]), (1, 2)), 0)


def test_resolvent_kernel_examples():
    assert np.allclose(resolvent_kernel(diag_tuple([0.0]), [1j]), [[1.0]])
    assert np.allclose(resolvent_kernel(diag_tuple([1.0], [0.0]), [1 + 1j, 1j]), [[0.5]])
    with pytest.raises(ZeroDivisionError):
        resolvent_kernel(diag_tuple([1.0]), [1.0])


def test_weight_examples():
    assert np.allclose(weight(diag_tuple([0.0]), 3.7).matrix, [[1.0]])
    assert np.allclose(weight(diag_tuple([1.0]), 2.0).matrix, [[2.0]])
    A = make_commuting_tuple(2, 2, 5, 3.0)
    assert op_norm(weight(A, 1.3).matrix @ weight(A, -1.3).matrix - np.eye(5)) < 1e-10


def test_spectral_apply_examples():
    A = make_commuting_tuple(4, 2, 5)
    assert np.allclose(spectral_apply(A, lambda x: 1.0), np.eye(5))
    assert op_norm(spectral_apply(A, lambda x: x[:, 1]) - A[2]) < 1e-12
    assert np.allclose(spectral_apply(diag_tuple([1.0]), lambda x: jbracket(x) ** 2), [[2.0]])


def test_op_norm_examples():
    assert op_norm(np.eye(3)) == pytest.approx(1.0)
    assert op_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0)
    u, v = np.array([1.0, 2.0, 2.0]), np.array([0.0, 3.0, 4.0j])
    assert op_norm(np.outer(u, v.conj())) == pytest.approx(3.0 * 5.0)


def test_matrix_json_roundtrip():
    B = random_operator(0, 3)
    assert np.array_equal(matrix_from_json(matrix_to_json(B)), B)


tuples = st.builds(make_commuting_tuple, st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 6),
                   st.floats(0.1, 3.0))


@given(tuples, st.integers(0, 10_000), st.data())
def test_resolvent_matches_spectral_oracle(A, seed, data):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-2, 2, A.nu) + 1j * rng.uniform(0.2, 2, A.nu)
    ref = spectral_apply(A, lambda x: 1.0 / np.sum(np.abs(x - z) ** 2, axis=1))
    assert op_norm(resolvent_kernel(A, z) - ref) <= 1e-12 * max(1.0, op_norm(ref))


@given(tuples, st.integers(0, 10_000), st.data())
def test_commutator_order_does_not_matter(A, seed, data):
    B = random_operator(seed, A.d)
    axes = data.draw(st.lists(st.integers(1, A.nu), min_size=1, max_size=4))
    alpha = [axes.count(j) for j in range(1, A.nu + 1)]
    X = iterated_commutator(A, B, alpha)
    Y = iterated_commutator(A, B, alpha, order=data.draw(st.permutations(axes)))
    scale = op_norm(B) * max(1.0, A.max_norm()) ** len(axes)
    assert op_norm(X - Y) <= 1e-11 * scale


@given(tuples, st.integers(0, 10_000))
def test_commutator_in_eigenbasis_is_hadamard_product(A, seed):
    # [B, A_j] has entries B_kl (t_l - t_k) in the joint eigenbasis
    B = random_operator(seed, A.d)
    j = 1 + seed % A.nu
    t = A.spectrum[:, j - 1]
    got = A.to_eigenbasis(iterated_commutator(A, B, [1 if i == j - 1 else 0 for i in range(A.nu)]))
    expected = A.to_eigenbasis(B) * (t[None, :] - t[:, None])
    assert np.allclose(got, expected, atol=1e-12 * max(1.0, A.max_norm()))
