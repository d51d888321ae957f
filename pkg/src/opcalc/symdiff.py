"""Exact calculus on sums of terms ``c * (t - Re z)**gamma * |t - z|**(-2m)``.

The family is closed under partial differentiation in ``t``.  ``|t - z|**2``
is kept as an atom (never expanded), so two sums are equal iff their
normal forms coincide.  Coefficients are :class:`fractions.Fraction`.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Iterator, NamedTuple

import numpy as np

from . import multiindex as mi
from .multiindex import MultiIndex


class Term(NamedTuple):
    coeff: Fraction
    gamma: MultiIndex
    m: int


class TermSum:
    """Normal-form sum of :class:`Term` objects keyed by ``(gamma, m)``."""

    __slots__ = ("nu", "_terms")

    def __init__(self, nu: int, terms=()):
        self.nu = nu
        self._terms: dict[tuple[MultiIndex, int], Fraction] = {}
        for t in terms:
            self._add(t.gamma, t.m, t.coeff)

    def _add(self, gamma, m, coeff) -> None:
        gamma = MultiIndex(gamma)
        if len(gamma) != self.nu:
            raise ValueError("term dimension does not match the sum")
        if m < 0:
            raise ValueError("negative power of |t - z|^2")
        key = (gamma, int(m))
        c = self._terms.get(key, Fraction(0)) + Fraction(coeff)
        if c:
            self._terms[key] = c
        else:
            self._terms.pop(key, None)

    @classmethod
    def single(cls, coeff, gamma, m: int) -> "TermSum":
        gamma = MultiIndex(gamma)
        return cls(len(gamma), [Term(Fraction(coeff), gamma, m)])

    @classmethod
    def g_power(cls, nu: int, m: int = 1) -> "TermSum":
        """``|t - z|**(-2m)``."""
        return cls.single(1, mi.zero(nu), m)

    def terms(self) -> list[Term]:
        return [Term(c, g, m) for (g, m), c in sorted(self._terms.items())]

    def __iter__(self) -> Iterator[Term]:
        return iter(self.terms())

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TermSum):
            return NotImplemented
        return self.nu == other.nu and self._terms == other._terms

    def __hash__(self):
        return hash((self.nu, frozenset(self._terms.items())))

    def __repr__(self) -> str:
        inner = ", ".join(f"({c}, {tuple(g)}, {m})" for c, g, m in self.terms())
        return f"TermSum[{inner}]"

    def __add__(self, other: "TermSum") -> "TermSum":
        out = self.copy()
        for (g, m), c in other._terms.items():
            out._add(g, m, c)
        return out

    def __neg__(self) -> "TermSum":
        return self * -1

    def __sub__(self, other: "TermSum") -> "TermSum":
        return self + (-other)

    def __mul__(self, k) -> "TermSum":
        k = Fraction(k)
        out = TermSum(self.nu)
        if k:
            out._terms = {key: c * k for key, c in self._terms.items()}
        return out

    __rmul__ = __mul__

    def copy(self) -> "TermSum":
        out = TermSum(self.nu)
        out._terms = dict(self._terms)
        return out

    def times_monomial(self, gamma) -> "TermSum":
        """Multiply by ``(t - Re z)**gamma``."""
        out = TermSum(self.nu)
        for (g, m), c in self._terms.items():
            out._add(mi.add(g, gamma), m, c)
        return out

    def times_g(self, k: int = 1) -> "TermSum":
        """Multiply by ``|t - z|**(-2k)``."""
        out = TermSum(self.nu)
        for (g, m), c in self._terms.items():
            out._add(g, m + k, c)
        return out

    def times(self, other: "TermSum") -> "TermSum":
        """Product of two sums."""
        if other.nu != self.nu:
            raise ValueError("term dimension does not match the sum")
        out = TermSum(self.nu)
        for (g1, m1), c1 in self._terms.items():
            for (g2, m2), c2 in other._terms.items():
                out._add(mi.add(g1, g2), m1 + m2, c1 * c2)
        return out

    def differentiate(self, i: int) -> "TermSum":
        return differentiate(self, i)

    def evaluate(self, t, z):
        return evaluate(self, t, z)


def differentiate(S: TermSum, i: int) -> TermSum:
    """Exact ``d/dt_i`` of ``S`` (axis ``i`` is 1-based).

    Power rule on ``(t - Re z)**gamma`` plus
    ``d_i |t-z|^{-2m} = -2m (t_i - Re z_i) |t-z|^{-2m-2}``.
    """
    if not 1 <= i <= S.nu:
        raise ValueError(f"axis {i} out of range 1..{S.nu}")
    out = TermSum(S.nu)
    k = i - 1
    for (g, m), c in S._terms.items():
        if g[k]:
            out._add(mi.shift(g, i, -1), m, c * g[k])
        if m:
            out._add(mi.shift(g, i, 1), m + 1, c * (-2 * m))
    return out


@lru_cache(maxsize=None)
def derivative_of_g_power(alpha: MultiIndex, m: int = 1) -> TermSum:
    """``d^alpha |t - z|^{-2m}`` by repeated differentiation.

    Derivatives are applied one axis at a time, axis 1 first; the cache keys
    on the whole multi-index so intermediate results are reused across calls.
    """
    alpha = MultiIndex(alpha)
    if alpha.degree == 0:
        return TermSum.g_power(alpha.nu, m)
    # peel one derivative off the last nonzero axis
    j = max(k for k, a in enumerate(alpha) if a) + 1
    return differentiate(derivative_of_g_power(mi.shift(alpha, j, -1), m), j)


def derivative_of_g(alpha) -> TermSum:
    """``d^alpha g`` for ``g(t) = |t - z|^{-2}``."""
    return derivative_of_g_power(MultiIndex(alpha), 1)


def derivative_along(axes, nu: int, m: int = 1) -> TermSum:
    """Differentiate ``g^m`` along an explicit sequence of axes (uncached)."""
    S = TermSum.g_power(nu, m)
    for i in axes:
        S = differentiate(S, i)
    return S


def t_coeff(alpha, beta) -> Term:
    """The term ``T_alpha^beta``.

    coeff = (-2)^{|a-b|} |a-b|! / (2^{|b|} b! (a-2b)!),
    gamma = a - 2b, m = |a - b|.
    """
    alpha, beta = MultiIndex(alpha), MultiIndex(beta)
    if len(alpha) != len(beta):
        raise ValueError("multi-index length mismatch")
    if not mi.leq(mi.scale(beta, 2), alpha):
        raise ValueError(f"T needs 2*beta <= alpha, got alpha={tuple(alpha)}, beta={tuple(beta)}")
    amb = mi.sub(alpha, beta).degree
    gamma = mi.sub(alpha, mi.scale(beta, 2))
    coeff = Fraction((-2) ** amb * mi.factorial([amb]),
                     2 ** beta.degree * mi.factorial(beta) * mi.factorial(gamma))
    return Term(coeff, gamma, amb)


def t_sum(alpha, beta) -> TermSum:
    c, g, m = t_coeff(alpha, beta)
    return TermSum.single(c, g, m)


def lemma0_closed_form(alpha) -> TermSum:
    """``sum_{2b <= a} a! T_a^b |t-z|^{-2}``: the closed form of ``d^a g``."""
    alpha = MultiIndex(alpha)
    af = mi.factorial(alpha)
    out = TermSum(alpha.nu)
    for beta in mi.enumerate_half(alpha):
        c, g, m = t_coeff(alpha, beta)
        out._add(g, m + 1, c * af)
    return out


def _h1_sides(alpha, beta, j):
    alpha, beta = MultiIndex(alpha), MultiIndex(beta)
    lhs = t_sum(alpha, beta).times_g(1)
    a2 = mi.shift(alpha, j, 2)
    b1 = mi.shift(beta, j, 1)
    k = Fraction(-(beta[j - 1] + 1), mi.sub(mi.shift(alpha, j, 1), beta).degree)
    return lhs, t_sum(a2, b1) * k


def check_h1(alpha, beta, j: int) -> bool:
    """T_a^b |t-z|^{-2} == -((b_j+1)/|a+d_j-b|) T_{a+2d_j}^{b+d_j}, exactly."""
    lhs, rhs = _h1_sides(alpha, beta, j)
    return lhs == rhs


def check_h2(alpha, beta, i: int) -> bool:
    """(b_i+1) T_{a+2d_i}^{b+d_i} 2(t_i - Re z_i) == (a_i+1-2b_i) T_{a+d_i}^b."""
    alpha, beta = MultiIndex(alpha), MultiIndex(beta)
    t_sum(alpha, beta)  # precondition check
    nu = alpha.nu
    lhs = (t_sum(mi.shift(alpha, i, 2), mi.shift(beta, i, 1))
           .times_monomial(mi.delta(nu, i)) * (2 * (beta[i - 1] + 1)))
    rhs = t_sum(mi.shift(alpha, i, 1), beta) * (alpha[i - 1] + 1 - 2 * beta[i - 1])
    return lhs == rhs


class SingularEvaluation(ZeroDivisionError):
    """Raised when ``|t - z|^2 = 0`` at a point where a term needs it."""


def evaluate(S: TermSum, t, z):
    """Floating-point value of ``S`` at real ``t`` and complex ``z``.

    ``t`` and ``z`` broadcast against each other over leading axes; the last
    axis has length ``nu``.  Returns a real array (or float).
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    y = t - z.real
    q = np.sum(y * y, axis=-1) + np.sum(z.imag ** 2, axis=-1)
    if len(S) == 0:
        return np.zeros_like(q) if np.ndim(q) else 0.0
    if any(m > 0 for _, _, m in S) and np.any(q == 0):
        raise SingularEvaluation("|t - z|^2 = 0 at an evaluation point")
    out = 0.0
    for c, g, m in S:
        val = float(c) * mi.power(y, g)
        if m:
            val = val / q ** m
        out = out + val
    return out * np.ones_like(q) if np.ndim(q) else float(out)


# ---------------------------------------------------------------------------
# kernel factors with the linear terms t_j - z_j and t_j - conj(z_j)


class KernelFactor:
    """``sum_key prod_{(j, s) in key} (s i v_j) * S_key(t, z)`` with ``S_key`` a TermSum.

    ``t_j - conj(z_j) = (t_j - Re z_j) + i v_j`` contributes the key entry
    ``(j, +1)``; ``t_j - z_j`` contributes ``(j, -1)``.
    """

    __slots__ = ("nu", "parts", "_hash")

    def __init__(self, nu: int, parts: dict | None = None):
        self.nu = nu
        self.parts = {}
        for key, S in (parts or {}).items():
            if len(S):
                self.parts[tuple(sorted(key))] = S
        self._hash = None

    @classmethod
    def one(cls, nu: int) -> "KernelFactor":
        return cls(nu, {(): TermSum.single(1, mi.zero(nu), 0)})

    @classmethod
    def zero(cls, nu: int) -> "KernelFactor":
        return cls(nu)

    @classmethod
    def of(cls, S: TermSum) -> "KernelFactor":
        return cls(S.nu, {(): S})

    @classmethod
    def g_power(cls, nu: int, m: int = 1) -> "KernelFactor":
        return cls.of(TermSum.g_power(nu, m))

    @classmethod
    def linear(cls, nu: int, j: int, conj: bool = True) -> "KernelFactor":
        """``t_j - conj(z_j)`` (``conj=True``) or ``t_j - z_j``; ``j`` is 1-based."""
        mono = TermSum.single(1, mi.delta(nu, j), 0)
        one = TermSum.single(1, mi.zero(nu), 0)
        return cls(nu, {(): mono, ((j, 1 if conj else -1),): one})

    def is_zero(self) -> bool:
        return not self.parts

    def __add__(self, other: "KernelFactor") -> "KernelFactor":
        parts = dict(self.parts)
        for key, S in other.parts.items():
            parts[key] = parts[key] + S if key in parts else S
        return KernelFactor(self.nu, parts)

    def __mul__(self, other) -> "KernelFactor":
        if isinstance(other, TermSum):
            other = KernelFactor.of(other)
        if not isinstance(other, KernelFactor):
            k = Fraction(other)
            return KernelFactor(self.nu, {key: S * k for key, S in self.parts.items()})
        out = KernelFactor(self.nu)
        for k1, S1 in self.parts.items():
            for k2, S2 in other.parts.items():
                out = out + KernelFactor(self.nu, {k1 + k2: S1.times(S2)})
        return out

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, KernelFactor) and self.nu == other.nu and self.parts == other.parts

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nu, frozenset(self.parts.items())))
        return self._hash

    def __repr__(self):
        return "KernelFactor(" + " + ".join(f"{k}:{S!r}" for k, S in sorted(self.parts.items())) + ")"

    def evaluate(self, t, z):
        """Complex value at real ``t`` and complex ``z``, broadcasting leading axes."""
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=complex)
        return FactorEvaluator(t, z.real, z.imag)(self)


class FactorEvaluator:
    """Evaluates many factors on one set of points, sharing powers.

    ``t``, ``u`` and ``v`` broadcast against each other over leading axes.
    """

    def __init__(self, t, u, v):
        self.y = np.asarray(t, dtype=float) - np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.q = np.sum(self.y * self.y, axis=-1) + np.sum(self.v * self.v, axis=-1)
        if np.any(self.q == 0):
            raise ZeroDivisionError("z lies on the joint spectrum")
        self._inv = {0: 1.0, 1: 1.0 / self.q}
        self._mono = {}
        self._cache = {}

    def inv_power(self, m):
        if m not in self._inv:
            self._inv[m] = self.inv_power(m - 1) * self._inv[1]
        return self._inv[m]

    def monomial(self, gamma):
        if gamma not in self._mono:
            self._mono[gamma] = mi.power(self.y, gamma) if any(gamma) else 1.0
        return self._mono[gamma]

    def termsum(self, S: TermSum):
        out = 0.0
        for c, g, m in S:
            out = out + float(c) * self.monomial(g) * self.inv_power(m)
        return out

    def __call__(self, F: KernelFactor):
        if F in self._cache:
            return self._cache[F]
        out = 0.0
        for key, S in F.parts.items():
            coef = 1.0
            for j, s in key:
                coef = coef * (s * 1j) * self.v[..., j - 1]
            out = out + coef * self.termsum(S)
        self._cache[F] = out
        return out
