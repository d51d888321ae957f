"""Smooth test functions with closed-form partial derivatives of every order.

Most families are radial in shifted, scaled coordinates, ``f(x) = h(|y|^2)``
with ``y = (x - c) / rho``.  Their partials follow from the profile
derivatives ``h^(m)`` through

    d^a h(|y|^2) = a! sum_{2b <= a} h^(|a-b|)(|y|^2) (2y)^(a-2b) / (b! (a-2b)!).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import multiindex as mi
from .multiindex import MultiIndex
from .operator_model import jbracket


# ---------------------------------------------------------------------------
# univariate truncated Taylor series, coefficients along axis 0

def _series_exp(c):
    """Series of exp(c(delta)) from the series c."""
    K = c.shape[0] - 1
    E = np.zeros_like(c)
    E[0] = np.exp(c[0])
    for k in range(1, K + 1):
        acc = 0.0
        for j in range(1, k + 1):
            acc = acc + j * c[j] * E[k - j]
        E[k] = acc / k
    return E


def _series_div(a, b):
    K = a.shape[0] - 1
    q = np.zeros_like(a)
    for k in range(K + 1):
        acc = a[k]
        for j in range(1, k + 1):
            acc = acc - b[j] * q[k - j]
        q[k] = acc / b[0]
    return q


def _psi_series(t0, slope, order):
    """Series of psi(t0 + slope*delta), psi(t) = exp(-1/t) for t > 0, else 0."""
    t0 = np.asarray(t0, dtype=float)
    flat = t0.reshape(-1)
    out = np.zeros((order + 1, flat.size))
    live = flat > 1.5e-3  # exp(-1/t) underflows below this
    if np.any(live):
        tl = flat[live]
        k = np.arange(order + 1)[:, None]
        c = -(1.0 / tl) * (-slope / tl) ** k
        out[:, live] = _series_exp(c)
    return out.reshape((order + 1,) + t0.shape)


def smooth_step_derivatives(r, inner: float, outer: float, order: int):
    """Derivatives 0..order of the C^inf step that is 1 for r <= inner, 0 for r >= outer.

    step = P / (P + Q) with P = psi((outer - r)/w), Q = psi((r - inner)/w).
    """
    r = np.asarray(r, dtype=float)
    w = outer - inner
    P = _psi_series((outer - r) / w, -1.0 / w, order)
    Q = _psi_series((r - inner) / w, 1.0 / w, order)
    S = _series_div(P, P + Q)
    fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
    return S * fact.reshape((-1,) + (1,) * r.ndim)


@dataclass(frozen=True)
class Bump:
    """Even C_0^inf function equal to 1 on [-plateau, plateau], 0 outside [-support, support]."""

    plateau: float = 0.5
    support: float = 1.0

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        return self._step(x)[0]

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * self._step(np.abs(x))[1]

    def value_and_derivative(self, x):
        x = np.asarray(x, dtype=float)
        S = self._step(np.abs(x))
        return S[0], np.sign(x) * S[1]

    def _step(self, r):
        # closed form of the first two derivatives; smooth_step_derivatives is
        # the general (slower) route
        w = self.support - self.plateau
        a = (self.support - r) / w
        b = (r - self.plateau) / w
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            P = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
            Q = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
            dP = np.where(a > 0, P / np.where(a > 0, a, 1.0) ** 2, 0.0) * (-1.0 / w)
            dQ = np.where(b > 0, Q / np.where(b > 0, b, 1.0) ** 2, 0.0) * (1.0 / w)
        den = P + Q
        val = P / den
        der = (dP * Q - P * dQ) / den ** 2
        return val, der


# ---------------------------------------------------------------------------
# radial profiles: derivatives h^(m)(q), m = 0..order, stacked along axis 0

@dataclass(frozen=True)
class BracketProfile:
    """h(q) = (1 + q)^p."""

    p: float

    def __call__(self, q, order):
        q = np.asarray(q, dtype=float)
        out = np.empty((order + 1,) + q.shape)
        base = 1.0 + q
        coef = 1.0
        for m in range(order + 1):
            out[m] = coef * base ** (self.p - m)
            coef *= self.p - m
        return out


@dataclass(frozen=True)
class ExpProfile:
    """h(q) = exp(-a q)."""

    a: float

    def __call__(self, q, order):
        q = np.asarray(q, dtype=float)
        e = np.exp(-self.a * q)
        return np.stack([(-self.a) ** m * e for m in range(order + 1)])


@dataclass(frozen=True)
class StepProfile:
    """h(q) = 1 for q <= q_in, 0 for q >= q_out, C^inf in between."""

    q_in: float
    q_out: float

    def __call__(self, q, order):
        return smooth_step_derivatives(q, self.q_in, self.q_out, order)


@lru_cache(maxsize=None)
def _radial_table(nu: int, order: int):
    """For each alpha, the (coef, m, gamma) triples of the radial chain rule."""
    table = []
    for alpha in mi.enumerate_upto(nu, order):
        af = mi.factorial(alpha)
        rows = []
        for beta in mi.enumerate_half(alpha):
            gamma = mi.sub(alpha, mi.scale(beta, 2))
            coef = af // (mi.factorial(beta) * mi.factorial(gamma))
            rows.append((float(coef), mi.sub(alpha, beta).degree, gamma))
        table.append((alpha, rows))
    return tuple(table)


# ---------------------------------------------------------------------------

class SmoothFunction:
    """A smooth real function on R^nu with all partials available in closed form.

    ``s`` is the declared decay exponent: ``|d^a f(x)| <= C_a <x>^(s - |a|)``.
    """

    nu: int
    s: float
    name: str = "f"
    max_order: float = math.inf

    def derivatives(self, x, order: int) -> dict[MultiIndex, np.ndarray]:
        """All partials ``d^a f(x)`` with ``|a| <= order``; ``x`` has shape (..., nu)."""
        raise NotImplementedError

    def partial(self, alpha, x) -> np.ndarray:
        alpha = MultiIndex(alpha)
        return self.derivatives(x, alpha.degree)[alpha]

    def __call__(self, x):
        return self.derivatives(x, 0)[mi.zero(self.nu)]

    def _check_order(self, order):
        if order > self.max_order:
            raise ValueError(f"{self.name} provides partials only up to order {self.max_order}")

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} nu={self.nu} s={self.s}>"


class Radial(SmoothFunction):
    def __init__(self, nu: int, profile, s: float, center=None, scale: float = 1.0, name: str = "radial"):
        self.nu = nu
        self.profile = profile
        self.s = float(s)
        self.center = np.zeros(nu) if center is None else np.asarray(center, dtype=float).reshape(nu)
        self.scale = float(scale)
        self.name = name

    def derivatives(self, x, order):
        self._check_order(order)
        x = np.asarray(x, dtype=float)
        y = (x - self.center) / self.scale
        q = np.sum(y * y, axis=-1)
        H = self.profile(q, order)
        y2 = 2.0 * y
        pw = [[np.ones_like(q)] for _ in range(self.nu)]
        for j in range(self.nu):
            for _ in range(order):
                pw[j].append(pw[j][-1] * y2[..., j])
        out = {}
        for alpha, rows in _radial_table(self.nu, order):
            acc = 0.0
            for coef, m, gamma in rows:
                term = coef * H[m]
                for j, gj in enumerate(gamma):
                    if gj:
                        term = term * pw[j][gj]
                acc = acc + term
            out[alpha] = acc * self.scale ** (-alpha.degree)
        return out


class Polynomial(SmoothFunction):
    """Finite sum of monomials ``c * x^p``; mostly used as an exactly analytic test case."""

    def __init__(self, nu: int, monomials: dict, name: str = "poly"):
        self.nu = nu
        self.monomials = {MultiIndex(p): float(c) for p, c in monomials.items()}
        # the zero polynomial satisfies every decay bound; -1 keeps it on the s < 0 route
        self.s = float(max((p.degree for p in self.monomials), default=-1))
        self.name = name

    @classmethod
    def coordinate(cls, nu: int, j: int) -> "Polynomial":
        return cls(nu, {mi.delta(nu, j): 1.0}, name=f"x_{j}")

    def derivatives(self, x, order):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        out = {}
        for alpha in mi.enumerate_upto(self.nu, order):
            acc = np.zeros(shape)
            for p, c in self.monomials.items():
                if not mi.leq(alpha, p):
                    continue
                k = c
                for pj, aj in zip(p, alpha):
                    k *= math.perm(pj, aj)
                acc = acc + k * mi.power(x, mi.sub(p, alpha))
            out[alpha] = acc
        return out


class CutoffProduct(SmoothFunction):
    """``chi(x / k) * f(x)``; partials via the multivariate Leibniz rule."""

    def __init__(self, f: SmoothFunction, chi: SmoothFunction, k: float):
        if k <= 0:
            raise ValueError("cutoff scale must be positive")
        self.f, self.chi, self.k = f, chi, float(k)
        self.nu = f.nu
        self.s = f.s
        self.max_order = min(f.max_order, chi.max_order)
        self.name = f"cutoff[{f.name}, k={k:g}]"

    def derivatives(self, x, order):
        self._check_order(order)
        x = np.asarray(x, dtype=float)
        F = self.f.derivatives(x, order)
        X = self.chi.derivatives(x / self.k, order)
        out = {}
        for alpha in mi.enumerate_upto(self.nu, order):
            acc = 0.0
            for beta in mi.enumerate_below(alpha):
                acc = acc + (mi.binomial(alpha, beta) * self.k ** (-beta.degree)) \
                    * X[beta] * F[mi.sub(alpha, beta)]
            out[alpha] = acc
        return out


# ---------------------------------------------------------------------------
# built-in families

def bracket_power(nu: int, s: float = -2.0, center=None) -> Radial:
    """<x - c>^s."""
    return Radial(nu, BracketProfile(s / 2.0), s, center=center, name=f"<x>^{s:g}")


def shifted_inverse_bracket(nu: int, lam: float) -> Radial:
    """<x - lam*(1,...,1)>^-2."""
    f = bracket_power(nu, -2.0, center=np.full(nu, float(lam)))
    f.name = f"<x-{lam:g}>^-2"
    return f


def gaussian(nu: int, width: float = 1.0, s: float = -2.0, center=None) -> Radial:
    """exp(-|x - c|^2 / (2 width^2)); decays faster than any power, ``s`` is declared."""
    return Radial(nu, ExpProfile(0.5), s, center=center, scale=width, name=f"gauss(w={width:g})")


def mollified_indicator(nu: int, radius: float = 1.0, s: float = -2.0, center=None) -> Radial:
    """Smoothed indicator of the ball |x - c| < radius (transition width 1)."""
    if radius <= 0.5:
        raise ValueError("radius must exceed the half transition width 0.5")
    prof = StepProfile((radius - 0.5) ** 2, (radius + 0.5) ** 2)
    return Radial(nu, prof, s, center=center, name=f"moll(r={radius:g})")


def smooth_cutoff(nu: int) -> Radial:
    """chi with chi = 1 on |x| <= 1/2 and chi = 0 for |x| >= 1."""
    return Radial(nu, StepProfile(0.25, 1.0), 0.0, name="chi")


def cutoff_family(f: SmoothFunction, chi: SmoothFunction | None, k: float) -> CutoffProduct:
    """``f_k(x) = chi(x/k) f(x)``; with ``chi=None`` the default radial cutoff is used."""
    if chi is None:
        chi = smooth_cutoff(f.nu)
    z0 = np.zeros((1, f.nu))
    if abs(float(chi(z0)[0]) - 1.0) > 1e-14:
        raise ValueError("cutoff must equal 1 at the origin")
    return CutoffProduct(f, chi, k)


# ---------------------------------------------------------------------------
# decay constants

def sample_points(nu: int, seed: int = 0, box: float = 4.0, n_box: int = 400, n_far: int = 200) -> np.ndarray:
    """Seeded sample of R^nu: a dense box around the origin plus far points up to |x| = 1e3."""
    rng = np.random.default_rng(seed)
    inner = rng.uniform(-box, box, size=(n_box * nu, nu))
    dirs = rng.standard_normal((n_far, nu))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 10.0 ** rng.uniform(0.0, 3.0, size=(n_far, 1))
    grid1 = np.linspace(-box, box, 41)
    axis_pts = np.zeros((41 * nu, nu))
    for j in range(nu):
        axis_pts[41 * j:41 * (j + 1), j] = grid1
    return np.vstack([np.zeros((1, nu)), axis_pts, inner, dirs * radii])


def _decay_ratios(f: SmoothFunction, x, order):
    D = f.derivatives(x, order)
    br = jbracket(x)
    return {a: np.abs(v) * br ** (a.degree - f.s) for a, v in D.items()}


def estimate_constants(f: SmoothFunction, order: int, seed: int = 0, points=None) -> dict[MultiIndex, float]:
    """C_a = 1.1 * max over a seeded sample of |d^a f(x)| <x>^(|a| - s)."""
    if points is None:
        box = 4.0 + float(np.max(np.abs(getattr(f, "center", np.zeros(1)))))
        points = sample_points(f.nu, seed=seed, box=box)
    ratios = _decay_ratios(f, points, order)
    return {a: 1.1 * float(np.max(r)) for a, r in ratios.items()}


def check_decay(f: SmoothFunction, constants: dict, order: int, seed: int = 1) -> bool:
    """True iff |d^a f| <= C_a <x>^(s-|a|) at every point of a fresh seeded sample."""
    box = 4.0 + float(np.max(np.abs(getattr(f, "center", np.zeros(1)))))
    x = sample_points(f.nu, seed=seed, box=box)
    ratios = _decay_ratios(f, x, order)
    return all(np.all(r <= constants[a] * (1 + 1e-12)) for a, r in ratios.items())


def check_partials(f: SmoothFunction, order: int, seed: int = 2, h: float = 1e-5, rtol: float = 1e-5) -> bool:
    """Central differences of d^a f along each axis match d^(a + delta_j) f.

    Exercises consistency of the derivative table, including symmetry in
    the order of differentiation (every d^b is reached from several a).
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=(20, f.nu))
    D = f.derivatives(x, order)
    for j in range(1, f.nu + 1):
        e = np.zeros(f.nu)
        e[j - 1] = h
        Dp = f.derivatives(x + e, order - 1)
        Dm = f.derivatives(x - e, order - 1)
        for alpha in mi.enumerate_upto(f.nu, order - 1):
            fd = (Dp[alpha] - Dm[alpha]) / (2 * h)
            exact = D[mi.shift(alpha, j, 1)]
            scale = np.max(np.abs(exact)) + np.max(np.abs(D[alpha])) + 1.0
            if np.max(np.abs(fd - exact)) > rtol * scale:
                return False
    return True


@dataclass
class FunctionFamily:
    """Finitely many functions sharing ``s`` and uniform constants ``C_a``."""

    name: str
    nu: int
    s: float
    params: list
    build: Callable[[object], SmoothFunction] = field(repr=False)
    _constants: dict = field(default_factory=dict, repr=False)

    def members(self) -> list[SmoothFunction]:
        return [self.build(p) for p in self.params]

    def constants(self, order: int, seed: int = 0) -> dict[MultiIndex, float]:
        key = (order, seed)
        if key not in self._constants:
            merged: dict[MultiIndex, float] = {}
            for f in self.members():
                for a, c in estimate_constants(f, order, seed=seed).items():
                    merged[a] = max(merged.get(a, 0.0), c)
            self._constants[key] = merged
        return self._constants[key]

    def check(self, order: int = 3, seed: int = 1) -> bool:
        C = self.constants(order)
        return all(check_decay(f, C, order, seed=seed) for f in self.members())

    def describe(self, order: int = 2) -> dict:
        C = self.constants(order)
        return {
            "name": self.name,
            "nu": self.nu,
            "s": self.s,
            "params": [float(p) for p in self.params],
            "constants": {",".join(map(str, a)): c for a, c in C.items()},
        }


def _family_bracket_power(nu, s=-2.0, params=None):
    s = float(s)
    return FunctionFamily("bracket_power", nu, s, [s], lambda p: bracket_power(nu, p))


def _family_shifted(nu, params=None):
    params = [-2.0, -1.0, 0.0, 1.0, 2.0] if params is None else [float(p) for p in params]
    return FunctionFamily("shifted_inverse_bracket", nu, -2.0, params,
                          lambda lam: shifted_inverse_bracket(nu, lam))


def _family_gaussian(nu, s=-2.0, params=None):
    params = [0.5, 1.0, 2.0] if params is None else [float(p) for p in params]
    return FunctionFamily("gaussian", nu, float(s), params, lambda w: gaussian(nu, w, s))


def _family_mollified(nu, s=-2.0, params=None):
    params = [1.0, 1.5, 2.0] if params is None else [float(p) for p in params]
    return FunctionFamily("mollified_indicator", nu, float(s), params,
                          lambda r: mollified_indicator(nu, r, s))


FAMILIES = {
    "bracket_power": (_family_bracket_power, "<x>^s, single member; parameter s"),
    "shifted_inverse_bracket": (_family_shifted, "<x - lam>^-2 over a lam grid; s = -2"),
    "gaussian": (_family_gaussian, "exp(-|x|^2 / 2w^2) over widths w; s declared"),
    "mollified_indicator": (_family_mollified, "smoothed ball indicators over radii; s declared"),
}


def make_family(name: str, nu: int, **kwargs) -> FunctionFamily:
    try:
        builder, _ = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown function family {name!r}; known: {sorted(FAMILIES)}") from None
    return builder(nu, **kwargs)
