"""Commutator expansion of ``[B, f(A)]`` and its explicit remainders.

Every kernel-level remainder in the construction is a finite sum of
*sandwich terms*

    c * L(A, z) ad_A^gamma(B) R(A, z),

with ``L`` and ``R`` functions of ``A`` that are built from ``|A - z|^{-2}``,
powers of ``A - Re z`` and the linear factors ``A_j - conj(z_j)``,
``A_j - z_j``.  In the joint eigenbasis ``ad_A^gamma(B)`` has entries
``B_kl prod_j (t_l - t_k)_j^gamma_j``, so a sandwich is evaluated as
``B ⊙ sum_tau c L(t_k) Delta^gamma R(t_l)``.  Sandwich terms are symbolic
(exact rational coefficients); only evaluation touches floating point.

The commutator convention is ``ad_A^{delta_j}(X) = [X, A_j]``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from . import multiindex as mi
from .aae import AlmostAnalytic
from .fit import loglog_slope
from .functions import FunctionFamily, SmoothFunction
from .hs_calculus import (QuadratureSpec, _check_decay, default_quadrature, hs_constant, integrate,
                          point_integrals)
from .multiindex import MultiIndex
from .operator_model import (CommutingTuple, commutator, iterated_commutator, jbracket,
                             make_commuting_tuple, op_norm, random_operator, spectral_apply,
                             weight_diagonal)
from .symdiff import FactorEvaluator, KernelFactor, TermSum, derivative_of_g_power, t_coeff

# ---------------------------------------------------------------------------
# sandwich sums


class SandwichTerm(NamedTuple):
    coeff: Fraction
    left: KernelFactor
    gamma: MultiIndex
    right: KernelFactor


class Sandwich:
    """Sum of ``c L(A) ad^gamma(B) R(A)``; equal terms are merged."""

    def __init__(self, nu: int, terms=()):
        self.nu = nu
        self._terms: dict[tuple, Fraction] = {}
        for t in terms:
            self._add(t.coeff, t.left, t.gamma, t.right)

    def _add(self, c, L, gamma, R):
        if L.is_zero() or R.is_zero() or not c:
            return
        key = (L, MultiIndex(gamma), R)
        v = self._terms.get(key, Fraction(0)) + Fraction(c)
        if v:
            self._terms[key] = v
        else:
            self._terms.pop(key, None)

    def terms(self) -> list[SandwichTerm]:
        return [SandwichTerm(c, L, g, R) for (L, g, R), c in self._terms.items()]

    def __len__(self):
        return len(self._terms)

    def __add__(self, other: "Sandwich") -> "Sandwich":
        out = Sandwich(self.nu, self.terms())
        for t in other.terms():
            out._add(*t)
        return out

    def wrap(self, c, left: KernelFactor, shift, right: KernelFactor) -> "Sandwich":
        """``c * left * (self with ad shifted by shift) * right``."""
        out = Sandwich(self.nu)
        for t in self.terms():
            out._add(t.coeff * c, left * t.left, mi.add(t.gamma, shift), t.right * right)
        return out

    def scalar_matrix(self, T, z) -> np.ndarray:
        """``sum c L(t_k) Delta^gamma_kl R(t_l)`` at one ``z``; ``T`` is the (d, nu) spectrum."""
        T = np.asarray(T, dtype=float)
        z = np.asarray(z, dtype=complex)
        ev = FactorEvaluator(T, z.real, z.imag)
        diff = T[None, :, :] - T[:, None, :]
        d = T.shape[0]
        M = np.zeros((d, d), dtype=complex)
        for c, L, g, R in self.terms():
            M += float(c) * np.outer(_full(ev(L), d), _full(ev(R), d)) * mi.power(diff, g)
        return M

    def evaluate(self, A: CommutingTuple, B, z) -> np.ndarray:
        """The operator ``sum c L(A) ad^gamma(B) R(A)`` at ``z``."""
        Bh = A.to_eigenbasis(B)
        return A.from_eigenbasis(Bh * self.scalar_matrix(A.spectrum, z))


def _full(x, d):
    return np.broadcast_to(np.asarray(x, dtype=complex), (d,))


def _T_factor(alpha, beta) -> KernelFactor:
    c, g, m = t_coeff(alpha, beta)
    return KernelFactor.of(TermSum.single(c, g, m))


# ---------------------------------------------------------------------------
# single-factor remainders


@lru_cache(maxsize=None)
def remainder_g_sandwich(nu: int, alpha0: MultiIndex, n: int) -> Sandwich:
    """``R_n^g(A, ad^alpha0(B))``: three sums with coefficient (b_i+1)/|a+d_i-b| T_{a+2d_i}^{b+d_i}."""
    alpha0 = MultiIndex(alpha0)
    g = KernelFactor.g_power(nu)
    out = Sandwich(nu)
    if n >= 1:
        for alpha in mi.enumerate_degree(nu, n - 1):
            for beta in mi.enumerate_half(alpha):
                for i in range(1, nu + 1):
                    c = Fraction(beta[i - 1] + 1, mi.sub(mi.shift(alpha, i, 1), beta).degree)
                    L = _T_factor(mi.shift(alpha, i, 2), mi.shift(beta, i, 1))
                    out._add(c, L, mi.add(alpha0, mi.shift(alpha, i, 2)), g)
    for alpha in mi.enumerate_degree(nu, n):
        for beta in mi.enumerate_half(alpha):
            for i in range(1, nu + 1):
                c = Fraction(beta[i - 1] + 1, mi.sub(mi.shift(alpha, i, 1), beta).degree)
                L = _T_factor(mi.shift(alpha, i, 2), mi.shift(beta, i, 1))
                gamma = mi.add(alpha0, mi.shift(alpha, i, 1))
                out._add(c, L * KernelFactor.linear(nu, i, conj=True), gamma, g)
                out._add(c, L, gamma, KernelFactor.linear(nu, i, conj=False) * g)
    return out


@lru_cache(maxsize=None)
def remainder_gl_sandwich(nu: int, alpha0: MultiIndex, n: int, ell: int) -> Sandwich:
    """``R_n^{g_l}``: zero for n >= 1 and ``ad^{alpha0 + delta_l}(B)`` for n = 0."""
    one = KernelFactor.one(nu)
    if n >= 1:
        return Sandwich(nu)
    return Sandwich(nu, [SandwichTerm(Fraction(1), one, mi.shift(alpha0, ell, 1), one)])


def _check_z(nu, z):
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.shape != (nu,):
        raise ValueError("z must have one entry per component")
    if not np.any(z.imag):
        # |A - z|^{-2} may still exist, but the lemmas are stated for Im z != 0
        raise ValueError("z must have nonzero imaginary part")
    return z


def remainder_g(A: CommutingTuple, B, alpha0, n: int, z) -> np.ndarray:
    z = _check_z(A.nu, z)
    return remainder_g_sandwich(A.nu, MultiIndex(alpha0), n).evaluate(A, B, z)


def remainder_gl(A: CommutingTuple, B, alpha0, n: int, ell: int) -> np.ndarray:
    if not 1 <= ell <= A.nu:
        raise ValueError(f"axis {ell} out of range 1..{A.nu}")
    if n >= 1:
        return np.zeros((A.d, A.d), dtype=complex)
    return iterated_commutator(A, B, mi.shift(MultiIndex(alpha0), ell, 1))


# ---------------------------------------------------------------------------
# products of kernel functions


class Kernel(NamedTuple):
    """A factor ``h`` of a product: ``("g", 0)`` for ``|t - z|^{-2}``, ``("gl", l)`` for ``t_l - conj(z_l)``."""
    kind: str
    ell: int = 0


G = Kernel("g")


def GL(ell: int) -> Kernel:
    return Kernel("gl", ell)


def kernel_symbol(h: Kernel, nu: int) -> KernelFactor:
    if h.kind == "g":
        return KernelFactor.g_power(nu)
    if h.kind == "gl":
        return KernelFactor.linear(nu, h.ell, conj=True)
    raise ValueError(f"unknown kernel factor {h!r}")


def kernel_derivative(h: Kernel, alpha, nu: int) -> KernelFactor:
    alpha = MultiIndex(alpha)
    if h.kind == "g":
        return KernelFactor.of(derivative_of_g_power(alpha, 1))
    if h.kind == "gl":
        if alpha.degree == 0:
            return kernel_symbol(h, nu)
        if alpha == mi.delta(nu, h.ell):
            return KernelFactor.one(nu)
        return KernelFactor.zero(nu)
    raise ValueError(f"unknown kernel factor {h!r}")


def product_derivative(factors: Sequence[Kernel], alpha, nu: int) -> KernelFactor:
    """``d^alpha prod_i h_i`` by the multinomial Leibniz rule."""
    alpha = MultiIndex(alpha)
    if not factors:
        return KernelFactor.one(nu) if alpha.degree == 0 else KernelFactor.zero(nu)
    out = KernelFactor.zero(nu)
    for split in mi.compositions(alpha, len(factors)):
        term = KernelFactor.one(nu) * mi.multinomial(alpha, split)
        for h, a in zip(factors, split):
            term = term * kernel_derivative(h, a, nu)
            if term.is_zero():
                break
        out = out + term
    return out


def _remainder_sandwich(h: Kernel, nu: int, alpha0, n: int) -> Sandwich:
    if h.kind == "g":
        return remainder_g_sandwich(nu, MultiIndex(alpha0), n)
    return remainder_gl_sandwich(nu, MultiIndex(alpha0), n, h.ell)


def leibniz_sandwich(factors: Sequence[Kernel], nu: int, n: int):
    """Taylor part and remainder of ``[B, prod_i h_i(A)]``.

    Returns ``(taylor, remainder)``: ``taylor`` maps each alpha with
    1 <= |alpha| <= n to ``(1/alpha!) d^alpha(prod h_i)``; ``remainder`` is

        sum_j sum_{|a| <= n} (1/a!) d^a(prod_{i<j} h_i) R^{h_j}_{n-|a|}(ad^a B) prod_{i>j} h_i.
    """
    factors = tuple(factors)
    taylor = {}
    for alpha in mi.enumerate_upto(nu, n, start=1):
        D = product_derivative(factors, alpha, nu)
        if not D.is_zero():
            taylor[alpha] = D * Fraction(1, mi.factorial(alpha))
    rem = Sandwich(nu)
    for j, h in enumerate(factors):
        right = KernelFactor.one(nu)
        for hh in factors[j + 1:]:
            right = right * kernel_symbol(hh, nu)
        for alpha in mi.enumerate_upto(nu, n):
            left = product_derivative(factors[:j], alpha, nu)
            if left.is_zero():
                continue
            inner = _remainder_sandwich(h, nu, alpha, n - alpha.degree)
            rem = rem + inner.wrap(Fraction(1, mi.factorial(alpha)), left, mi.zero(nu), right)
    return taylor, rem


def _taylor_matrix(A: CommutingTuple, B, taylor: dict, z) -> np.ndarray:
    ev = FactorEvaluator(A.spectrum, z.real, z.imag)
    out = np.zeros((A.d, A.d), dtype=complex)
    for alpha, D in taylor.items():
        out += A.diag_to_matrix(_full(ev(D), A.d)) @ iterated_commutator(A, B, alpha)
    return out


def product_matrix(A: CommutingTuple, factors: Sequence[Kernel], z) -> np.ndarray:
    z = _check_z(A.nu, z)
    P = KernelFactor.one(A.nu)
    for h in factors:
        P = P * kernel_symbol(h, A.nu)
    return A.diag_to_matrix(_full(P.evaluate(A.spectrum, z), A.d))


def leibniz_expand(A: CommutingTuple, B, factors: Sequence[Kernel], n: int, z):
    """``(sum, remainder)`` of the expansion of ``[B, prod h_i(A)]`` at ``z``."""
    z = _check_z(A.nu, z)
    taylor, rem = leibniz_sandwich(tuple(factors), A.nu, n)
    return _taylor_matrix(A, B, taylor, z), rem.evaluate(A, B, z)


# ---------------------------------------------------------------------------
# the kernel (A_l - conj z_l) |A - z|^{-2 nu}


def _g_power_factor(nu, alpha, m):
    if m == 0:
        return KernelFactor.one(nu) if MultiIndex(alpha).degree == 0 else KernelFactor.zero(nu)
    return KernelFactor.of(derivative_of_g_power(MultiIndex(alpha), m))


def _g_power_times_gl(nu, alpha, m, ell):
    """``d^alpha(g^m g_l) = g_l d^alpha g^m + alpha_l d^{alpha - delta_l} g^m``."""
    alpha = MultiIndex(alpha)
    out = KernelFactor.linear(nu, ell, conj=True) * _g_power_factor(nu, alpha, m)
    if alpha[ell - 1]:
        out = out + _g_power_factor(nu, mi.shift(alpha, ell, -1), m) * alpha[ell - 1]
    return out


@lru_cache(maxsize=None)
def remainder_kernel_sandwich(nu: int, ell: int, n: int) -> Sandwich:
    """``R_{l,n}(A, B)`` from its three displayed sums."""
    if not 1 <= ell <= nu:
        raise ValueError(f"axis {ell} out of range 1..{nu}")
    gl = KernelFactor.linear(nu, ell, conj=True)
    zero = mi.zero(nu)
    out = Sandwich(nu)
    # first sum: j = 1..nu-1, left d^a(g^{j-1}), right g^{nu-j} g_l
    for j in range(1, nu):
        right = KernelFactor.g_power(nu, nu - j) * gl
        for alpha in mi.enumerate_upto(nu, n):
            left = _g_power_factor(nu, alpha, j - 1)
            if left.is_zero():
                continue
            inner = remainder_g_sandwich(nu, alpha, n - alpha.degree)
            out = out + inner.wrap(Fraction(1, mi.factorial(alpha)), left, zero, right)
    # second sum: |a| = n, d^a(g^{nu-1}) ad^{a + delta_l}(B) g
    g = KernelFactor.g_power(nu)
    for alpha in mi.enumerate_degree(nu, n):
        left = _g_power_factor(nu, alpha, nu - 1)
        out._add(Fraction(1, mi.factorial(alpha)), left, mi.shift(alpha, ell, 1), g)
    # third sum: d^a(g^{nu-1} g_l) R^g_{n-|a|}(ad^a B)
    one = KernelFactor.one(nu)
    for alpha in mi.enumerate_upto(nu, n):
        left = _g_power_times_gl(nu, alpha, nu - 1, ell)
        inner = remainder_g_sandwich(nu, alpha, n - alpha.degree)
        out = out + inner.wrap(Fraction(1, mi.factorial(alpha)), left, zero, one)
    return out


@lru_cache(maxsize=None)
def kernel_taylor_factors(nu: int, ell: int, n: int) -> dict:
    """``(1/a!) d^a(|t - z|^{-2 nu}(t_l - conj z_l))`` for 1 <= |a| <= n."""
    return {alpha: _g_power_times_gl(nu, alpha, nu, ell) * Fraction(1, mi.factorial(alpha))
            for alpha in mi.enumerate_upto(nu, n, start=1)}


def kernel_matrix(A: CommutingTuple, ell: int, z) -> np.ndarray:
    """``(A_l - conj z_l) |A - z|^{-2 nu}``."""
    return product_matrix(A, [G] * A.nu + [GL(ell)], z)


def kernel_taylor(A: CommutingTuple, B, ell: int, n: int, z) -> np.ndarray:
    z = _check_z(A.nu, z)
    return _taylor_matrix(A, B, kernel_taylor_factors(A.nu, ell, n), z)


def remainder_kernel(A: CommutingTuple, B, ell: int, n: int, z) -> np.ndarray:
    z = _check_z(A.nu, z)
    return remainder_kernel_sandwich(A.nu, ell, n).evaluate(A, B, z)


# ---------------------------------------------------------------------------
# identity residuals (machine-precision checks)


def relative_residual(R, B, fA=None) -> float:
    """``||R|| / (||B|| max(1, ||f(A)||))``."""
    scale = op_norm(B) * max(1.0, 0.0 if fA is None else op_norm(fA))
    return op_norm(R) / scale if scale > 0 else op_norm(R)


def basestep_residual(A: CommutingTuple, B, alpha0, z) -> float:
    """``[ad^a0 B, g(A)]`` against its two-sum right side."""
    z = _check_z(A.nu, z)
    X = iterated_commutator(A, B, alpha0)
    g = product_matrix(A, [G], z)
    rhs = np.zeros_like(g)
    for i in range(1, A.nu + 1):
        Y = iterated_commutator(A, B, mi.shift(MultiIndex(alpha0), i, 1))
        Ai = A[i]
        I = np.eye(A.d)
        rhs -= g @ (Ai - np.conj(z[i - 1]) * I) @ Y @ g
        rhs -= g @ Y @ (Ai - z[i - 1] * I) @ g
    return relative_residual(commutator(X, g) - rhs, B, g)


def lemma1_residual(A: CommutingTuple, B, alpha0, n: int, z) -> float:
    z = _check_z(A.nu, z)
    alpha0 = MultiIndex(alpha0)
    X = iterated_commutator(A, B, alpha0)
    g = product_matrix(A, [G], z)
    ev = FactorEvaluator(A.spectrum, z.real, z.imag)
    lhs = commutator(X, g)
    for alpha in mi.enumerate_upto(A.nu, n, start=1):
        D = KernelFactor.of(derivative_of_g_power(alpha, 1))
        lhs -= (A.diag_to_matrix(_full(ev(D), A.d)) / mi.factorial(alpha)
                @ iterated_commutator(A, B, mi.add(alpha0, alpha)))
    lhs -= remainder_g(A, B, alpha0, n, z)
    return relative_residual(lhs, B, g)


def leibniz_residual(A: CommutingTuple, B, factors: Sequence[Kernel], n: int, z) -> float:
    z = _check_z(A.nu, z)
    P = product_matrix(A, factors, z)
    S, R = leibniz_expand(A, B, factors, n, z)
    return relative_residual(commutator(B, P) - S - R, B, P)


def acommb_residual(A: CommutingTuple, B, ell: int, n: int, z) -> float:
    z = _check_z(A.nu, z)
    K = kernel_matrix(A, ell, z)
    res = commutator(B, K) - kernel_taylor(A, B, ell, n, z) - remainder_kernel(A, B, ell, n, z)
    return relative_residual(res, B, K)


# ---------------------------------------------------------------------------
# the expansion of [B, f(A)]


def _derivative_matrix(A: CommutingTuple, f: SmoothFunction, alpha) -> np.ndarray:
    return spectral_apply(A, lambda x: f.partial(alpha, x))


def taylor_terms(A: CommutingTuple, B, f: SmoothFunction, n: int, side: str = "left") -> np.ndarray:
    """``sum_{1<=|a|<=n} (1/a!) d^a f(A) ad^a(B)``.

    ``side="right"`` gives ``sum (-1)^{|a|-1} (1/a!) ad^a(B) d^a f(A)``.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if n > f.max_order:
        raise ValueError(f"{f.name} provides partials only up to order {f.max_order}")
    out = np.zeros((A.d, A.d), dtype=complex)
    for alpha in mi.enumerate_upto(A.nu, n, start=1):
        D = _derivative_matrix(A, f, alpha) / mi.factorial(alpha)
        C = iterated_commutator(A, B, alpha)
        if side == "left":
            out += D @ C
        else:
            out += (-1) ** (alpha.degree - 1) * (C @ D)
    return out


def remainder_direct(A: CommutingTuple, B, f: SmoothFunction, n: int, side: str = "left") -> np.ndarray:
    """``[B, f(A)]`` minus the Taylor terms, with ``f(A)`` from the spectral oracle."""
    return commutator(B, spectral_apply(A, f)) - taylor_terms(A, B, f, n, side)


def commutator_norm_sum(A: CommutingTuple, B, order: int) -> float:
    """``sum_{|a| = order} ||ad^a(B)||``."""
    return sum(op_norm(iterated_commutator(A, B, a)) for a in mi.enumerate_degree(A.nu, order))


# ---------------------------------------------------------------------------
# remainder by quadrature


def _grouped(sandwiches):
    """Distinct factors and, per (ell, gamma), index pairs with coefficients."""
    factors = {}
    groups = []
    for ell, S in enumerate(sandwiches):
        by_gamma = {}
        for c, L, g, R in S.terms():
            li = factors.setdefault(L, len(factors))
            ri = factors.setdefault(R, len(factors))
            by_gamma.setdefault(g, []).append((float(c), li, ri))
        groups.append(by_gamma)
    return list(factors), groups


def _sandwich_integrals(A, B, exts, n, quad):
    """Integrate the three-sum form of ``R_{l,n}`` entrywise on the shared grid."""
    nu, d = A.nu, A.d
    T = A.spectrum
    sandwiches = [remainder_kernel_sandwich(nu, ell, n) for ell in range(1, nu + 1)]
    factors, groups = _grouped(sandwiches)
    acc = [[{g: np.zeros((d, d)) for g in grp} for grp in groups] for _ in exts]

    def consumer(u, v, parts):
        ev = FactorEvaluator(T[:, None, None, :], u[None, :, None, :], v[None])
        Z = v.shape[0] * v.shape[1]
        vals = [np.broadcast_to(ev(F), (d,) + v.shape[:2]).reshape(d, Z) for F in factors]
        for e, (re, im) in enumerate(parts):
            for ell in range(nu):
                c = (re[ell] + 1j * im[ell]).reshape(Z)
                for g, items in groups[ell].items():
                    for coef, li, ri in items:
                        # real part of the half-space sum, see integrate()
                        acc[e][ell][g] += coef * ((vals[li] * c) @ vals[ri].T).real

    integrate(exts, quad, consumer, width=d * (len(factors) + 1))
    diff = T[None, :, :] - T[:, None, :]
    out = []
    for e in range(len(exts)):
        S = np.zeros((d, d))
        for ell in range(nu):
            for g, M in acc[e][ell].items():
                S += mi.power(diff, g) * M
        out.append(S)
    return out


def _taylor_integrals(A, B, exts, n, quad):
    """Integrate ``R_{l,n}`` through its Taylor-remainder form.

    Entry (k, l) of ``R_{l,n}(z)`` in the eigenbasis is ``B_kl`` times
    ``K(t_l, z) - sum_{|a| <= n} (1/a!) d^a K(t_k, z) (t_l - t_k)^a`` with
    ``K = (t_l - conj z_l)|t - z|^{-2 nu}``; this equals the three-sum form
    exactly.  Every piece has its singularity at a single eigenpoint, so one
    sweep over the nodes serves all entries.
    """
    nu, d = A.nu, A.d
    T = A.spectrum
    alphas = mi.enumerate_upto(nu, n)
    kernels = [tuple(_g_power_times_gl(nu, a, nu, ell) * Fraction(1, mi.factorial(a))
                     for ell in range(1, nu + 1)) for a in alphas]
    P = point_integrals(T, exts, quad, kernels)
    diff = T[None, :, :] - T[:, None, :]
    out = []
    for e in range(len(exts)):
        S = np.broadcast_to(P[e, :, 0][None, :], (d, d)).copy()
        for j, a in enumerate(alphas):
            S -= P[e, :, j][:, None] * mi.power(diff, a)
        out.append(S)
    return out


REMAINDER_METHODS = ("taylor", "sandwich")


def remainder_integral_many(A: CommutingTuple, B, exts: Sequence[AlmostAnalytic], n: int,
                            quad: QuadratureSpec, method: str = "taylor") -> list[np.ndarray]:
    """``C_nu sum_l int dbar_l f~(z) R_{l,n}(A, B) dz`` for several extensions at once.

    ``method="sandwich"`` evaluates the three displayed sums at every node
    (cost grows with the number of sandwich terms and with d^2);
    ``method="taylor"`` uses the equivalent Taylor-remainder form of the
    same kernel.
    """
    if method not in REMAINDER_METHODS:
        raise ValueError(f"method must be one of {REMAINDER_METHODS}")
    for ext in exts:
        _check_decay(ext)
    run = _taylor_integrals if method == "taylor" else _sandwich_integrals
    Bh = A.to_eigenbasis(B)
    c = hs_constant(A.nu)
    return [A.from_eigenbasis(c * Bh * S) for S in run(A, B, exts, n, quad)]


def remainder_integral(A: CommutingTuple, B, ext: AlmostAnalytic, n: int,
                       quad: QuadratureSpec | None = None, method: str = "taylor") -> np.ndarray:
    if quad is None:
        quad = default_quadrature(ext, A)
    return remainder_integral_many(A, B, [ext], n, quad, method)[0]


def remainder_quad_error(A: CommutingTuple, B, exts: Sequence[AlmostAnalytic], n: int,
                         quad: QuadratureSpec, method: str = "taylor"):
    """Values on ``quad`` and one-level refinement error estimates per extension."""
    base = remainder_integral_many(A, B, exts, n, quad, method)
    fine = remainder_integral_many(A, B, exts, n, quad.refined(), method)
    return base, [op_norm(a - b) for a, b in zip(base, fine)]


# ---------------------------------------------------------------------------
# Hadamard probe


@dataclass
class HadamardResult:
    slope: float
    v: np.ndarray
    norms: np.ndarray
    degenerate: bool
    bound: float            # the exponent -(n + 2 nu)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "bound": self.bound, "degenerate": self.degenerate,
                "v": self.v.tolist(), "norms": self.norms.tolist()}


def check_hypotheses(n: int, t1: float, t2: float, s: float | None = None) -> None:
    problems = []
    if n < 0:
        problems.append(f"n = {n} must be >= 0")
    if not 0 <= t1 <= n + 1:
        problems.append(f"t1 = {t1} must satisfy 0 <= t1 <= n + 1 = {n + 1}")
    if not 0 <= t2 <= 1:
        problems.append(f"t2 = {t2} must satisfy 0 <= t2 <= 1")
    if s is not None and not t1 + t2 + s < n + 1:
        problems.append(f"t1 + t2 + s = {t1 + t2 + s} must be < n + 1 = {n + 1}")
    if problems:
        raise ValueError("hypotheses violated: " + "; ".join(problems))


def weighted_norm(A: CommutingTuple, R, t1: float, t2: float) -> float:
    """``||<A>^t1 R <A>^t2||``."""
    Rh = A.to_eigenbasis(R)
    w1 = weight_diagonal(A, t1)
    w2 = weight_diagonal(A, t2)
    return op_norm(w1[:, None] * Rh * w2[None, :])


def hadamard_probe(A: CommutingTuple, B, ell: int, n: int, t1: float, t2: float,
                   v_path, u0, tol: float = 1e-12) -> HadamardResult:
    """Slope of ``log ||<A>^t1 R_{l,n}(z) <A>^t2||`` against ``log v`` on ``z = u0 + i v (1, ..., 1)``."""
    check_hypotheses(n, t1, t2)
    v_path = np.asarray(v_path, dtype=float)
    if np.any(v_path <= 0) or np.any(np.diff(v_path) >= 0):
        raise ValueError("v_path must be decreasing positive reals")
    u0 = np.asarray(u0, dtype=float).reshape(A.nu)
    S = remainder_kernel_sandwich(A.nu, ell, n)
    norms = []
    for v in v_path:
        z = u0 + 1j * v * np.ones(A.nu)
        norms.append(weighted_norm(A, S.evaluate(A, B, z), t1, t2))
    norms = np.array(norms)
    # every remainder term carries some ad^gamma(B) with |gamma| >= 1
    first = max(op_norm(commutator(B, A[j])) for j in range(1, A.nu + 1))
    degenerate = first <= tol * op_norm(B) * max(1.0, A.max_norm())
    slope = float("nan") if degenerate else loglog_slope(v_path, norms)
    return HadamardResult(slope, v_path, norms, degenerate, -(n + 2 * A.nu))


# ---------------------------------------------------------------------------
# bound experiment


@dataclass
class ExpansionReport:
    nu: int
    n: int
    t1: float
    t2: float
    s: float
    family: str
    ratios: dict                      # d -> list of per-instance max ratios over the family
    max_ratio: dict                   # d -> max ratio
    median_ratio: dict
    remainder_norms: dict             # d -> list of raw remainder norms
    weighted_norms: dict              # d -> list of weighted norms
    commutator_sums: dict             # d -> list of sum_{|a|=n+1} ||ad^a(B)||
    term_norms: dict                  # d -> mean norm of the order-|a| Taylor block, per |a|
    exact_expansion: dict             # d -> number of instances with vanishing denominator
    timings: dict = field(default_factory=dict)

    @property
    def spread(self) -> float:
        vals = [v for v in self.max_ratio.values() if np.isfinite(v) and v > 0]
        return max(vals) / min(vals) if vals else float("nan")

    def to_dict(self) -> dict:
        key = lambda d: str(d)
        return {
            "nu": self.nu, "n": self.n, "t1": self.t1, "t2": self.t2, "s": self.s,
            "family": self.family,
            "max_ratio": {key(d): v for d, v in self.max_ratio.items()},
            "median_ratio": {key(d): v for d, v in self.median_ratio.items()},
            "spread": self.spread,
            "ratios": {key(d): v for d, v in self.ratios.items()},
            "remainder_norms": {key(d): v for d, v in self.remainder_norms.items()},
            "weighted_norms": {key(d): v for d, v in self.weighted_norms.items()},
            "commutator_sums": {key(d): v for d, v in self.commutator_sums.items()},
            "term_norms": {key(d): v for d, v in self.term_norms.items()},
            "exact_expansion": {key(d): v for d, v in self.exact_expansion.items()},
        }


def make_instance(seed: int, nu: int, d: int, spectrum_scale: float = 2.0):
    """Seeded ``(A, B)`` pair: Haar-rotated diagonal tuple and a complex Gaussian ``B``."""
    A = make_commuting_tuple(seed, nu, d, spectrum_scale)
    B = random_operator(seed + 7919, d)
    return A, B


def bound_experiment(family: FunctionFamily, n: int, t1: float, t2: float, instances: Sequence[int],
                     dims: Sequence[int] = (4, 8, 16), spectrum_scale: float = 2.0,
                     degenerate_tol: float = 1e-12) -> ExpansionReport:
    """Ratios ``||<A>^t1 R <A>^t2|| / sum_{|a|=n+1} ||ad^a(B)||`` over seeds, family members and sizes."""
    check_hypotheses(n, t1, t2, family.s)
    nu = family.nu
    members = family.members()
    ratios, mx, med, rn, wn, cs, tn, ex = {}, {}, {}, {}, {}, {}, {}, {}
    t0 = time.perf_counter()
    for d in dims:
        ratios[d], rn[d], wn[d], cs[d], ex[d] = [], [], [], [], 0
        blocks = np.zeros(n)
        for seed in instances:
            A, B = make_instance(seed, nu, d, spectrum_scale)
            denom = commutator_norm_sum(A, B, n + 1)
            worst, worst_raw, worst_w = 0.0, 0.0, 0.0
            for f in members:
                R = remainder_direct(A, B, f, n)
                w = weighted_norm(A, R, t1, t2)
                worst_raw = max(worst_raw, op_norm(R))
                worst_w = max(worst_w, w)
                for k in range(1, n + 1):
                    blk = np.zeros((d, d), dtype=complex)
                    for alpha in mi.enumerate_degree(nu, k):
                        blk += (_derivative_matrix(A, f, alpha) / mi.factorial(alpha)
                                @ iterated_commutator(A, B, alpha))
                    blocks[k - 1] += op_norm(blk) / (len(members) * len(instances))
            if denom <= degenerate_tol * max(1.0, op_norm(B)):
                ex[d] += 1
                if worst_w > 1e-8:
                    raise ArithmeticError("vanishing commutators but nonzero remainder")
                continue
            worst = worst_w / denom
            ratios[d].append(worst)
            rn[d].append(worst_raw)
            wn[d].append(worst_w)
            cs[d].append(denom)
        mx[d] = float(np.max(ratios[d])) if ratios[d] else float("nan")
        med[d] = float(np.median(ratios[d])) if ratios[d] else float("nan")
        tn[d] = {str(k + 1): float(b) for k, b in enumerate(blocks)}
    return ExpansionReport(nu, n, t1, t2, family.s, family.name, ratios, mx, med, rn, wn, cs, tn, ex,
                           {"seconds": time.perf_counter() - t0})
