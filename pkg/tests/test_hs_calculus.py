import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opcalc.aae import build_extension
from opcalc.functions import Polynomial, bracket_power, mollified_indicator, shifted_inverse_bracket
from opcalc.hs_calculus import (QuadratureSpec, absolute_mass, calibrate_constant, default_quadrature,
                                hs_apply_cutoff,
                                hs_apply, hs_apply_many, hs_constant, quad_error_estimate)
from opcalc.operator_model import CommutingTuple, make_commuting_tuple, op_norm, spectral_apply


def test_hs_constant_values():
    assert hs_constant(1) == pytest.approx(1 / math.pi)
    assert hs_constant(2) == pytest.approx(1 / math.pi ** 2)
    assert hs_constant(3) == pytest.approx(2 / math.pi ** 3)


def test_scalar_example():
    A = CommutingTuple(np.eye(1), np.zeros((1, 1)))
    F = hs_apply(A, build_extension(bracket_power(1), 3))
    assert abs(F[0, 0] - 1.0) <= 1e-4


def test_disjoint_support_gives_zero():
    A = make_commuting_tuple(0, 1, 4, 1.0)
    f = mollified_indicator(1, 1.0, center=[8.0])
    ext = build_extension(f, 3)
    q = default_quadrature(ext, A)
    # the exact answer is 0, so what remains is quadrature error
    assert op_norm(hs_apply(A, ext, q)) <= 3 * quad_error_estimate(A, ext, q)


def test_nu2_random_tuple():
    A = make_commuting_tuple(5, 2, 4, 1.0)
    f = bracket_power(2)
    F = hs_apply(A, build_extension(f, 5))
    assert op_norm(F - spectral_apply(A, f)) <= 1e-3


def test_calibration_nu1():
    A = make_commuting_tuple(1, 1, 5, 1.0)
    cal = calibrate_constant(A, build_extension(bracket_power(1), 3))
    assert cal.relative_error <= 1e-3


def test_estimate_shrinks_under_refinement():
    A = make_commuting_tuple(2, 1, 4, 1.0)
    ext = build_extension(bracket_power(1), 3)
    q = default_quadrature(ext, A, nodes=6, levels=0)
    assert quad_error_estimate(A, ext, q.refined()) < quad_error_estimate(A, ext, q)


def test_zero_function_has_zero_estimate():
    A = make_commuting_tuple(3, 1, 3, 1.0)
    ext = build_extension(Polynomial(1, {}), 2)
    assert quad_error_estimate(A, ext) == 0.0


def test_many_matches_single():
    A = make_commuting_tuple(4, 1, 4, 1.0)
    exts = [build_extension(shifted_inverse_bracket(1, lam), 3) for lam in (-1.0, 1.0)]
    q = default_quadrature(exts[0], A)
    many = hs_apply_many(A, exts, q)
    for ext, F in zip(exts, many):
        assert np.allclose(F, hs_apply(A, ext, q), atol=1e-13)


def test_absolute_mass_finite():
    A = make_commuting_tuple(6, 1, 3, 1.0)
    ext = build_extension(bracket_power(1), 3)
    m = absolute_mass(A, ext, default_quadrature(ext, A))
    assert np.isfinite(m) and m > 0


@pytest.mark.parametrize("kw", [dict(nodes=1), dict(levels=-1), dict(layout="ring"),
                                dict(layout="polar", u_panels=5), dict(grading=2, u_panels=3)])
def test_invalid_quadrature_rejected(kw):
    base = dict(nu=2, nodes=4, w_breaks=(0.5,), support=1.0, u_center=(0.0, 0.0))
    with pytest.raises(ValueError):
        QuadratureSpec(**{**base, **kw})


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_matches_spectral_oracle_nu1(seed, d):
    A = make_commuting_tuple(seed, 1, d, 2.0)
    f = bracket_power(1)
    ext = build_extension(f, 3)
    q = default_quadrature(ext, A)
    F = hs_apply(A, ext, q)
    err = op_norm(F - spectral_apply(A, f))
    assert err <= 1e-4
    assert op_norm(F - F.conj().T) <= 1e-10


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_linear_in_function(seed, c):
    # f -> hs_apply is linear: compare two centres against their combination
    A = make_commuting_tuple(seed, 1, 3, 1.0)
    e1 = build_extension(shifted_inverse_bracket(1, 0.5), 3)
    e2 = build_extension(shifted_inverse_bracket(1, -0.5), 3)
    q = default_quadrature(e1, A)
    F1, F2 = hs_apply_many(A, [e1, e2], q)
    ref = spectral_apply(A, lambda x: e1.base(x) + c * e2.base(x))
    assert op_norm(F1 + c * F2 - ref) <= 2e-4 * (1 + abs(c))


def test_nonnegative_s_requires_cutoff_route():
    A = make_commuting_tuple(0, 1, 3, 1.0)
    with pytest.raises(ValueError, match="hs_apply_cutoff"):
        hs_apply(A, build_extension(bracket_power(1, 1.0), 3))


def test_cutoff_route_converges_in_k():
    A = make_commuting_tuple(0, 1, 5, 1.0)
    conv = hs_apply_cutoff(A, bracket_power(1, 1.0), 3, [1.0, 2.0, 4.0])
    # chi(x/k) = 1 on the spectrum once k >= 2 max|t|, so the steps collapse to quadrature size
    assert conv.errors[0] > 0.1
    assert conv.steps[2] < 1e-5 and conv.errors[2] < 1e-5
    assert all(e <= 3 * est for e, est in zip(conv.errors[1:], conv.estimates[1:]))
    with pytest.raises(ValueError):
        hs_apply_cutoff(A, bracket_power(1, 1.0), 3, [2.0, 1.0])


def test_calibration_residual_within_estimate():
    A = make_commuting_tuple(1, 1, 5, 1.0)
    ext = build_extension(bracket_power(1), 3)
    q = default_quadrature(ext, A)
    cal = calibrate_constant(A, ext, q)
    assert cal.residual <= 3 * quad_error_estimate(A, ext, q)


def _coverage(factor, seeds=range(10)):
    f = bracket_power(1)
    ext = build_extension(f, 3)
    hits = 0
    for seed in seeds:
        A = make_commuting_tuple(seed, 1, 4, 2.0)
        q = default_quadrature(ext, A)
        err = op_norm(hs_apply(A, ext, q) - spectral_apply(A, f))
        hits += err <= factor * quad_error_estimate(A, ext, q)
    return hits / len(seeds)


@pytest.mark.xfail(strict=True, reason="a one-level refinement difference equals the coarse error up to "
                                       "the fine error, so it falls on either side of it about half the time")
def test_estimate_bounds_error_on_most_instances():
    assert _coverage(1.0) >= 0.8


def test_estimate_bounds_error_within_factor_three():
    assert _coverage(3.0) == 1.0
