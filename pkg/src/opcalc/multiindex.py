"""Multi-index arithmetic and enumeration.

Axes are numbered 1..nu throughout the package, so ``delta(nu, j)`` has its
single 1 in entry ``j - 1``.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Iterator


class MultiIndex(tuple):
    """A tuple of nonnegative integers."""

    __slots__ = ()

    def __new__(cls, entries: Iterable[int] = ()) -> "MultiIndex":
        entries = tuple(int(e) for e in entries)
        if not entries:
            raise ValueError("a multi-index needs at least one entry")
        if any(e < 0 for e in entries):
            raise ValueError(f"negative entry in multi-index {entries}")
        return super().__new__(cls, entries)

    @property
    def nu(self) -> int:
        return len(self)

    @property
    def degree(self) -> int:
        return sum(self)

    def __repr__(self) -> str:
        return f"MultiIndex{tuple(self)}"


def zero(nu: int) -> MultiIndex:
    return MultiIndex((0,) * nu)


def delta(nu: int, j: int) -> MultiIndex:
    """Unit multi-index with a 1 on axis ``j`` (1-based)."""
    if not 1 <= j <= nu:
        raise ValueError(f"axis {j} out of range 1..{nu}")
    return MultiIndex(1 if i == j - 1 else 0 for i in range(nu))


def factorial(alpha: Iterable[int]) -> int:
    """Exact alpha! = prod_j alpha_j!."""
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


def add(a: Iterable[int], b: Iterable[int]) -> MultiIndex:
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ValueError("multi-index length mismatch")
    return MultiIndex(x + y for x, y in zip(a, b))


def sub(a: Iterable[int], b: Iterable[int]) -> MultiIndex:
    """Componentwise a - b; raises ValueError if any entry goes negative."""
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ValueError("multi-index length mismatch")
    return MultiIndex(x - y for x, y in zip(a, b))


def scale(a: Iterable[int], k: int) -> MultiIndex:
    return MultiIndex(k * x for x in a)


def shift(alpha: Iterable[int], j: int, amount: int) -> MultiIndex:
    """Change entry ``j`` (1-based) of ``alpha`` by ``amount``."""
    alpha = list(alpha)
    if not 1 <= j <= len(alpha):
        raise ValueError(f"axis {j} out of range 1..{len(alpha)}")
    alpha[j - 1] += amount
    if alpha[j - 1] < 0:
        raise ValueError(f"shift would make entry {j} negative")
    return MultiIndex(alpha)


def leq(a: Iterable[int], b: Iterable[int]) -> bool:
    """Componentwise a <= b."""
    return all(x <= y for x, y in zip(a, b))


@lru_cache(maxsize=None)
def _degree_tuples(nu: int, k: int) -> tuple[tuple[int, ...], ...]:
    if nu == 1:
        return ((k,),)
    out = []
    for first in range(k, -1, -1):
        for rest in _degree_tuples(nu - 1, k - first):
            out.append((first,) + rest)
    return tuple(out)


def enumerate_degree(nu: int, k: int) -> list[MultiIndex]:
    """All multi-indices of length ``nu`` and degree ``k``.

    Ordered lexicographically from the largest first entry down, e.g.
    ``(2,0), (1,1), (0,2)``.
    """
    if nu < 1 or k < 0:
        raise ValueError("need nu >= 1 and k >= 0")
    return [MultiIndex(t) for t in _degree_tuples(nu, k)]


def enumerate_upto(nu: int, k: int, start: int = 0) -> list[MultiIndex]:
    """All multi-indices with ``start <= degree <= k``, grouped by degree."""
    out: list[MultiIndex] = []
    for m in range(start, k + 1):
        out.extend(enumerate_degree(nu, m))
    return out


def enumerate_half(alpha: Iterable[int]) -> list[MultiIndex]:
    """All beta with 2*beta <= alpha componentwise, lexicographic order."""
    ranges = [range(a // 2 + 1) for a in alpha]
    return [MultiIndex(b) for b in itertools.product(*ranges)]


def enumerate_below(alpha: Iterable[int]) -> Iterator[MultiIndex]:
    """All beta with beta <= alpha componentwise."""
    for b in itertools.product(*(range(a + 1) for a in alpha)):
        yield MultiIndex(b)


def binomial(alpha: Iterable[int], beta: Iterable[int]) -> int:
    """Multi-index binomial coefficient prod_j C(alpha_j, beta_j)."""
    out = 1
    for a, b in zip(alpha, beta):
        out *= math.comb(a, b)
    return out


def compositions(alpha: Iterable[int], parts: int) -> Iterator[tuple[MultiIndex, ...]]:
    """All ordered splits alpha = alpha_1 + ... + alpha_parts."""
    alpha = MultiIndex(alpha)
    if parts == 1:
        yield (alpha,)
        return
    for first in enumerate_below(alpha):
        for rest in compositions(sub(alpha, first), parts - 1):
            yield (first,) + rest


def multinomial(alpha: Iterable[int], split: Iterable[Iterable[int]]) -> int:
    """alpha! / prod_i alpha_i! for a split of alpha."""
    denom = 1
    for part in split:
        denom *= factorial(part)
    return factorial(alpha) // denom


def power(x, alpha: Iterable[int]):
    """x**alpha = prod_j x[..., j]**alpha_j for arrays with trailing axis nu."""
    out = 1
    for j, a in enumerate(alpha):
        if a:
            out = out * x[..., j] ** a
    return out
