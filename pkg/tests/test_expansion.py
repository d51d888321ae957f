import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opcalc import multiindex as mi
from opcalc.aae import build_extension, build_family_extensions
from opcalc.expansion import (G, GL, acommb_residual, basestep_residual, bound_experiment,
                              check_hypotheses, hadamard_probe, kernel_matrix, leibniz_expand,
                              leibniz_residual, lemma1_residual, make_instance, remainder_direct,
                              remainder_g, remainder_gl, remainder_integral,
                              remainder_integral_many, remainder_kernel, remainder_quad_error,
                              taylor_terms)
from opcalc.functions import Polynomial, bracket_power, make_family
from opcalc.hs_calculus import default_quadrature
from opcalc.operator_model import (CommutingTuple, commutator, iterated_commutator, make_commuting_tuple,
                                   op_norm, random_operator, spectral_apply)


def commuting_B(A, seed=0):
    """An operator diagonal in the joint eigenbasis of ``A``."""
    rng = np.random.default_rng(seed)
    return A.diag_to_matrix(rng.standard_normal(A.d) + 1j * rng.standard_normal(A.d))


def z_point(nu, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, nu) + 1j * rng.uniform(0.3, 1.0, nu)


def test_identity_B_gives_zero_terms():
    A = make_commuting_tuple(0, 2, 4)
    assert op_norm(taylor_terms(A, np.eye(4), bracket_power(2), 2)) < 1e-12


def test_left_and_right_agree_for_linear_f():
    A = CommutingTuple(np.eye(2), np.array([[0.0], [1.0]]))
    B = np.array([[0, 1], [1, 0]], dtype=complex)
    f = Polynomial.coordinate(1, 1)
    expected = np.array([[0, 1], [-1, 0]])
    assert np.allclose(taylor_terms(A, B, f, 1, "left"), expected)
    assert np.allclose(taylor_terms(A, B, f, 1, "right"), expected)
    assert np.allclose(remainder_direct(A, B, f, 1), 0)


def test_remainder_vanishes_for_commuting_B_and_scalars():
    A = make_commuting_tuple(1, 2, 5)
    f = bracket_power(2)
    assert op_norm(remainder_direct(A, commuting_B(A), f, 2)) < 1e-12
    A1 = make_commuting_tuple(2, 2, 1)
    assert op_norm(remainder_direct(A1, random_operator(0, 1), f, 2)) == 0.0


def test_adjoint_symmetry():
    A, B = make_instance(3, 2, 5)
    f = bracket_power(2)
    left = remainder_direct(A, B, f, 2)
    right = remainder_direct(A, -B.conj().T, f, 2, side="right")
    assert op_norm(right - left.conj().T) < 1e-12


def test_remainder_g_vanishes_for_commuting_B():
    A = make_commuting_tuple(4, 2, 4)
    assert op_norm(remainder_g(A, commuting_B(A), (0, 0), 2, z_point(2))) < 1e-12


def test_remainder_gl_closed_form():
    A, B = make_instance(5, 2, 4)
    assert np.all(remainder_gl(A, B, (1, 0), 2, 1) == 0)
    assert np.allclose(remainder_gl(A, B, (1, 0), 0, 2), iterated_commutator(A, B, (1, 1)))


def test_leibniz_single_factor_is_lemma1():
    A, B = make_instance(6, 2, 4)
    z = z_point(2, 1)
    _, R = leibniz_expand(A, B, [G], 2, z)
    assert np.allclose(R, remainder_g(A, B, (0, 0), 2, z), atol=1e-13)


def test_leibniz_commuting_B():
    A = make_commuting_tuple(7, 2, 4)
    S, R = leibniz_expand(A, commuting_B(A), [G, GL(1)], 2, z_point(2, 2))
    assert op_norm(S) < 1e-12 and op_norm(R) < 1e-12


def test_kernel_remainder_commuting_B():
    A = make_commuting_tuple(8, 2, 4)
    assert op_norm(remainder_kernel(A, commuting_B(A), 2, 1, z_point(2, 3))) < 1e-12


def test_kernel_matrix_oracle():
    A = make_commuting_tuple(9, 2, 4)
    z = z_point(2, 4)
    ref = spectral_apply(A, lambda x: (x[:, 0] - np.conj(z[0])) / np.sum(np.abs(x - z) ** 2, axis=1) ** 2)
    assert op_norm(kernel_matrix(A, 1, z) - ref) < 1e-12


def test_real_z_rejected():
    A, B = make_instance(0, 1, 3)
    with pytest.raises(ValueError):
        remainder_g(A, B, (0,), 1, [0.5])


@pytest.mark.parametrize("args", [(1, -0.1, 0.5), (1, 2.5, 0.5), (1, 1.0, 1.5), (1, 1.0, 1.0, 0.0)])
def test_hypotheses_enforced(args):
    with pytest.raises(ValueError, match="hypotheses violated"):
        check_hypotheses(*args)


def test_hadamard_commuting_B_is_degenerate():
    A = make_commuting_tuple(10, 2, 4)
    res = hadamard_probe(A, commuting_B(A), 1, 1, 1.0, 0.5, np.geomspace(1, 1e-3, 8), [0.1, 0.2])
    assert res.degenerate


def test_hadamard_large_v_decays():
    A, B = make_instance(11, 1, 4)
    res = hadamard_probe(A, B, 1, 1, 0.0, 0.0, np.geomspace(1e4, 1e2, 6), [0.0])
    assert np.all(np.diff(res.norms) > 0)
    with pytest.raises(ValueError):
        hadamard_probe(A, B, 1, 1, 0.0, 0.0, np.geomspace(1e-3, 1, 6), [0.0])


def test_hadamard_eigenpoint_slope():
    for nu, n in [(1, 1), (1, 2), (2, 1)]:
        A, B = make_instance(12, nu, 4)
        res = hadamard_probe(A, B, 1, n, 1.0, 0.5, np.geomspace(1e-1, 1e-4, 12), A.spectrum[0])
        assert res.slope >= res.bound - 0.2


def test_quadrature_remainder_nu1():
    A, B = make_instance(1, 1, 4)
    fam = make_family("shifted_inverse_bracket", 1)
    n = 1
    exts = build_family_extensions(fam, n + 3)
    quad = default_quadrature(exts[0], A)
    vals, est = remainder_quad_error(A, B, exts, n, quad)
    for f, R, e in zip(fam.members(), vals, est):
        assert op_norm(R - remainder_direct(A, B, f, n)) <= 3 * e


def test_taylor_and_sandwich_methods_agree():
    A, B = make_instance(2, 1, 3)
    ext = build_extension(bracket_power(1), 4)
    quad = default_quadrature(ext, A, nodes=12, levels=1)
    a = remainder_integral(A, B, ext, 1, quad, method="taylor")
    b = remainder_integral(A, B, ext, 1, quad, method="sandwich")
    assert op_norm(a - b) < 1e-4 * op_norm(a)
    with pytest.raises(ValueError):
        remainder_integral(A, B, ext, 1, quad, method="other")


def test_quadrature_remainder_linear_in_B_and_zero_for_commuting():
    A, B = make_instance(3, 1, 3)
    ext = build_extension(bracket_power(1), 4)
    quad = default_quadrature(ext, A, nodes=8, levels=0)
    C = random_operator(99, 3)
    R1, R2, R12, R0 = remainder_integral_many(A, B, [ext], 1, quad)[0], \
        remainder_integral_many(A, C, [ext], 1, quad)[0], \
        remainder_integral_many(A, B - 2j * C, [ext], 1, quad)[0], \
        remainder_integral_many(A, commuting_B(A), [ext], 1, quad)[0]
    assert op_norm(R12 - (R1 - 2j * R2)) < 1e-12
    assert op_norm(R0) < 1e-12


def test_bound_experiment_small():
    fam = make_family("shifted_inverse_bracket", 1)
    rep = bound_experiment(fam, 2, 1.0, 1.0, range(4), dims=(3, 5))
    assert all(len(r) == 4 for r in rep.ratios.values())
    assert np.isfinite(rep.spread) and rep.spread >= 1
    assert rep.to_dict()["spread"] == rep.spread
    with pytest.raises(ValueError):
        bound_experiment(fam, 0, 2.0, 0.5, range(2))


instance = st.tuples(st.integers(0, 10_000), st.integers(1, 2), st.integers(1, 6))


@settings(max_examples=25, deadline=None)
@given(instance, st.data())
def test_basestep_identity(inst, data):
    seed, nu, d = inst
    A, B = make_instance(seed, nu, d)
    alpha0 = data.draw(st.lists(st.integers(0, 2), min_size=nu, max_size=nu))
    assert basestep_residual(A, B, alpha0, z_point(nu, seed)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(instance, st.integers(1, 3), st.data())
def test_lemma1_identity(inst, n, data):
    seed, nu, d = inst
    A, B = make_instance(seed, nu, d)
    alpha0 = data.draw(st.lists(st.integers(0, 1), min_size=nu, max_size=nu))
    assert lemma1_residual(A, B, alpha0, n, z_point(nu, seed)) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(instance, st.integers(0, 2), st.data())
def test_kernel_identity(inst, n, data):
    seed, nu, d = inst
    A, B = make_instance(seed, nu, d)
    ell = data.draw(st.integers(1, nu))
    assert acommb_residual(A, B, ell, n, z_point(nu, seed)) <= 1e-9


@settings(max_examples=15, deadline=None)
@given(instance, st.integers(0, 2), st.data())
def test_leibniz_identity(inst, n, data):
    seed, nu, d = inst
    A, B = make_instance(seed, nu, d)
    factors = data.draw(st.lists(st.sampled_from([G] + [GL(l) for l in range(1, nu + 1)]),
                                 min_size=2, max_size=3))
    assert leibniz_residual(A, B, factors, n, z_point(nu, seed)) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(instance, st.integers(1, 3))
def test_expansion_identity_with_oracle(inst, n):
    # [B, f(A)] = taylor terms + remainder, and the right-side variant for -B*
    seed, nu, d = inst
    A, B = make_instance(seed, nu, d)
    f = bracket_power(nu)
    lhs = commutator(B, spectral_apply(A, f))
    assert op_norm(lhs - taylor_terms(A, B, f, n) - remainder_direct(A, B, f, n)) < 1e-12
    adj = remainder_direct(A, -B.conj().T, f, n, side="right")
    assert op_norm(adj - remainder_direct(A, B, f, n).conj().T) < 1e-11


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_polynomial_remainder_vanishes_beyond_degree(seed, nu):
    # a degree-2 polynomial is reproduced exactly by its second-order expansion
    A, B = make_instance(seed, nu, 4)
    f = Polynomial(nu, {mi.scale(mi.delta(nu, 1), 2): 1.0, mi.delta(nu, nu): -3.0})
    assert op_norm(remainder_direct(A, B, f, 2)) < 1e-10 * max(1.0, A.max_norm()) ** 2
