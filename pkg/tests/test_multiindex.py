import itertools
import math

import pytest
from hypothesis import given, strategies as st

from opcalc import multiindex as mi
from opcalc.multiindex import MultiIndex

indices = st.lists(st.integers(0, 4), min_size=1, max_size=3).map(MultiIndex)


@pytest.mark.parametrize("alpha, expected", [((0, 0), 1), ((3, 2), 12), ((1, 0, 2), 2)])
def test_factorial(alpha, expected):
    assert mi.factorial(alpha) == expected


def test_enumerate_degree_examples():
    assert mi.enumerate_degree(2, 2) == [(2, 0), (1, 1), (0, 2)]
    assert len(mi.enumerate_degree(3, 2)) == 6
    assert mi.enumerate_degree(1, 0) == [(0,)]


@pytest.mark.parametrize("nu, k", [(1, 5), (2, 4), (3, 3), (4, 2)])
def test_enumerate_degree_counts_and_uniqueness(nu, k):
    got = mi.enumerate_degree(nu, k)
    assert len(got) == math.comb(k + nu - 1, nu - 1)
    assert len(set(got)) == len(got)
    assert all(a.degree == k for a in got)


def test_enumerate_half_examples():
    assert mi.enumerate_half((2, 1)) == [(0, 0), (1, 0)]
    assert mi.enumerate_half((0, 0)) == [(0, 0)]
    assert mi.enumerate_half((4,)) == [(0,), (1,), (2,)]


def test_shift_examples():
    assert mi.shift((1, 0), 2, 1) == (1, 1)
    assert mi.shift((1, 0), 1, -1) == (0, 0)
    with pytest.raises(ValueError):
        mi.shift((0, 0), 1, -1)
    with pytest.raises(ValueError):
        mi.shift((0, 0), 3, 1)


def test_constructor_rejects_bad_entries():
    with pytest.raises(ValueError):
        MultiIndex((1, -1))
    with pytest.raises(ValueError):
        MultiIndex(())


def test_delta_is_one_based():
    assert mi.delta(3, 1) == (1, 0, 0)
    assert mi.delta(3, 3) == (0, 0, 1)
    with pytest.raises(ValueError):
        mi.delta(2, 0)


@given(indices)
def test_half_enumeration_is_exactly_the_constraint(alpha):
    half = set(mi.enumerate_half(alpha))
    brute = {MultiIndex(b) for b in itertools.product(*(range(a + 1) for a in alpha))
             if all(2 * x <= y for x, y in zip(b, alpha))}
    assert half == brute


@given(indices, st.integers(2, 3))
def test_multinomial_sums_to_number_of_words(alpha, parts):
    # sum over splits of alpha!/prod alpha_i! counts words with letters from `parts` copies
    total = sum(mi.multinomial(alpha, split) for split in mi.compositions(alpha, parts))
    assert total == parts ** alpha.degree


@given(indices, st.data())
def test_shift_roundtrip(alpha, data):
    j = data.draw(st.integers(1, len(alpha)))
    k = data.draw(st.integers(0, 3))
    assert mi.shift(mi.shift(alpha, j, k), j, -k) == alpha


@given(indices)
def test_binomial_vandermonde(alpha):
    # sum_beta C(alpha, beta) = 2^|alpha|
    assert sum(mi.binomial(alpha, b) for b in mi.enumerate_below(alpha)) == 2 ** alpha.degree
