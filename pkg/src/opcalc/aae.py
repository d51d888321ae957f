"""Almost analytic extensions of smooth functions on R^nu.

For ``z = u + i v`` the extension truncated at order ``N`` is

    f~(z) = sum_{|a| <= N} d^a f(u) / a! * (i v)^a * chi_{|a|}(u, v),
    chi_k(u, v) = prod_j kappa(lam_k v_j / <u>),

with thresholds ``lam_0 = C_0`` and ``lam_k = max(max_{|a|=k} C_a, lam_{k-1} + 1)``.

``dbar`` is evaluated in closed form.  Pairing the u-derivative of level
``k`` with the v-derivative of level ``k + 1`` gives

    2 dbar_l f~ = sum_{|b| <= N} d^(b + delta_l) f(u) / b! (iv)^b (chi_|b| - chi_{|b|+1})
                + sum_{|a| <= N} d^a f(u) / a! (iv)^a (d_{u_l} + i d_{v_l}) chi_|a|

with ``chi_{N+1} = 0``.  No term cancels against another, so the value is
accurate even where it is of size ``|v|^N`` deep inside the plateau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import multiindex as mi
from .fit import loglog_slope
from .functions import (Bump, FunctionFamily, SmoothFunction, cutoff_family,
                        estimate_constants)
from .multiindex import MultiIndex
from .operator_model import jbracket

__all__ = ["AlmostAnalytic", "build_extension", "dbar", "cutoff_family",
           "verify_decay", "decay_fit", "DecayReport", "thresholds_from_constants"]

# C_a are upper bounds, so raising a tiny one is harmless; keeps lam_0 > 0
CONSTANT_FLOOR = 1.0


def thresholds_from_constants(constants: dict, nu: int, N: int) -> tuple[float, ...]:
    def c(alpha):
        return max(constants[alpha], CONSTANT_FLOOR)

    lam = [c(mi.zero(nu))]
    for k in range(1, N + 1):
        lam.append(max(max(c(a) for a in mi.enumerate_degree(nu, k)), lam[-1] + 1.0))
    return tuple(lam)


@dataclass(frozen=True)
class AlmostAnalytic:
    base: SmoothFunction
    N: int
    thresholds: tuple
    kappa: Bump = field(default_factory=Bump)
    constants: dict = field(default=None, repr=False, compare=False)

    @property
    def nu(self) -> int:
        return self.base.nu

    @property
    def support_radius(self) -> float:
        """f~ vanishes where some |v_j| >= support_radius * <u>."""
        return self.kappa.support / self.thresholds[0]

    @property
    def plateau_radius(self) -> float:
        """All cutoffs equal 1 where every |v_j| <= plateau_radius * <u>."""
        return self.kappa.plateau / self.thresholds[-1]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.evaluate(z.real, z.imag)

    def evaluate(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        P = self.base.derivatives(u, self.N)
        br = jbracket(u)
        shape = np.broadcast_shapes(u.shape[:-1], v.shape[:-1])
        vp = _powers(1j * v, self.N)
        out = np.zeros(shape, dtype=complex)
        for k in range(self.N + 1):
            chi = np.ones(shape)
            for j in range(self.nu):
                chi = chi * self.kappa(self.thresholds[k] * v[..., j] / br)
            Sk = 0.0
            for a in mi.enumerate_degree(self.nu, k):
                Sk = Sk + P[a] / mi.factorial(a) * _mono(vp, a)
            out = out + Sk * chi
        return out

    def dbar_all(self, z):
        """Array of shape (nu, ...) with dbar_l f~(z) for l = 1..nu."""
        z = np.asarray(z, dtype=complex)
        return self.dbar_uv(z.real, z.imag)

    def dbar_uv(self, u, v, derivs=None):
        """dbar of f~ at u + i v; ``u`` and ``v`` broadcast over leading axes.

        ``derivs`` may carry precomputed ``base.derivatives(u, N + 1)``.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        nu, N = self.nu, self.N
        P = self.base.derivatives(u, N + 1) if derivs is None else derivs
        br = jbracket(u)
        shape = np.broadcast_shapes(u.shape[:-1], v.shape[:-1])
        vp = _powers(1j * v, N)

        # cutoff values and their u/v derivatives per level
        chi, du_chi, dv_chi = [], [], []
        for k in range(N + 1):
            lam = self.thresholds[k]
            K, dK, arg = [], [], []
            for j in range(nu):
                x = lam * v[..., j] / br
                kv, kd = self.kappa.value_and_derivative(x)
                K.append(kv)
                dK.append(kd)
                arg.append(x)
            prod_all = np.ones(shape)
            for kv in K:
                prod_all = prod_all * kv
            others = []
            for j in range(nu):
                p = np.ones(shape)
                for i in range(nu):
                    if i != j:
                        p = p * K[i]
                others.append(p)
            radial = sum(arg[j] * dK[j] * others[j] for j in range(nu))
            chi.append(prod_all)
            du_chi.append([-(u[..., l] / br ** 2) * radial for l in range(nu)])
            dv_chi.append([(lam / br) * dK[l] * others[l] for l in range(nu)])
        chi.append(np.zeros(shape))

        out = np.zeros((nu,) + shape, dtype=complex)
        for k in range(N + 1):
            step = chi[k] - chi[k + 1]
            alphas = mi.enumerate_degree(nu, k)
            mono = [_mono(vp, a) / mi.factorial(a) for a in alphas]
            S0 = 0.0
            for a, mo in zip(alphas, mono):
                S0 = S0 + P[a] * mo
            for l in range(nu):
                S1 = 0.0
                for a, mo in zip(alphas, mono):
                    S1 = S1 + P[mi.shift(a, l + 1, 1)] * mo
                out[l] += S1 * step + S0 * (du_chi[k][l] + 1j * dv_chi[k][l])
        return 0.5 * out

    def dbar(self, ell: int, z):
        return dbar(self, ell, z)

    def w_factors(self, w, c: float):
        """w-side factors of :meth:`u_factors` for ``v = w * c * <u>``.

        Returns ``(common, per_axis)`` with ``common`` of shape (2 r, Mw) and
        ``per_axis[l]`` of shape (r, Mw), ``r`` the number of |a| <= N.
        """
        w = np.asarray(w, dtype=float)
        nu, N = self.nu, self.N
        alphas = mi.enumerate_upto(nu, N)
        pw = _powers(w, N)
        levels = []
        for k in range(N + 1):
            x = self.thresholds[k] * c * w
            K, dK = self.kappa.value_and_derivative(x)
            others = []
            for j in range(nu):
                p = np.ones(w.shape[:-1])
                for i in range(nu):
                    if i != j:
                        p = p * K[..., i]
                others.append(p)
            chi = others[0] * K[..., 0]
            radial = sum(x[..., j] * dK[..., j] * others[j] for j in range(nu))
            levels.append((chi, radial, [dK[..., l] * others[l] for l in range(nu)]))
        zero = np.zeros(w.shape[:-1])
        step, rad, per = [], [], [[] for _ in range(nu)]
        for a in alphas:
            k = a.degree
            mono = _mono(pw, a) * np.ones(w.shape[:-1])
            nxt = levels[k + 1][0] if k < N else zero
            step.append(mono * (levels[k][0] - nxt))
            rad.append(mono * levels[k][1])
            for l in range(nu):
                per[l].append(mono * levels[k][2][l])
        common = np.array(step + rad)
        return common, [np.array(p) for p in per]

    def u_factors(self, u, c: float, derivs=None):
        """u-side factors: ``dbar_l f~(u + i w c <u>) = U_l @ vstack(common, per_axis[l])``.

        Returns a list over ``l`` of complex arrays of shape (Cu, 3 r).
        """
        u = np.asarray(u, dtype=float)
        nu, N = self.nu, self.N
        P = self.base.derivatives(u, N + 1) if derivs is None else derivs
        br = jbracket(u)
        rho = c * br
        alphas = mi.enumerate_upto(nu, N)
        scal = [(1j * rho) ** a.degree / mi.factorial(a) for a in alphas]
        out = []
        for l in range(nu):
            c1 = [P[mi.shift(a, l + 1, 1)] * s for a, s in zip(alphas, scal)]
            c2 = [-P[a] * s * u[..., l] / br ** 2 for a, s in zip(alphas, scal)]
            c3 = [1j * P[a] * s * self.thresholds[a.degree] / br for a, s in zip(alphas, scal)]
            out.append(0.5 * np.stack(c1 + c2 + c3, axis=-1))
        return out


def _powers(x, order):
    """x[..., j]**p for p = 0..order, as nested lists pw[j][p]."""
    pw = []
    for j in range(x.shape[-1]):
        col = [np.ones(x.shape[:-1], dtype=x.dtype)]
        for _ in range(order):
            col.append(col[-1] * x[..., j])
        pw.append(col)
    return pw


def _mono(pw, alpha):
    out = 1.0
    for j, a in enumerate(alpha):
        if a:
            out = out * pw[j][a]
    return out


def build_extension(f: SmoothFunction | FunctionFamily, N: int, constants: dict | None = None,
                    kappa: Bump | None = None) -> AlmostAnalytic:
    """Almost analytic extension of ``f`` truncated at order ``N``.

    ``constants`` are the decay constants C_a for |a| <= N; when omitted
    they are estimated by sampling.  A :class:`FunctionFamily` may be passed
    as ``constants`` source through :func:`build_family_extensions`.
    """
    if N < 1:
        raise ValueError("truncation order N must be at least 1")
    if N + 1 > f.max_order:
        raise ValueError(f"{f.name} provides partials only up to order {f.max_order}, need {N + 1}")
    if constants is None:
        constants = estimate_constants(f, N)
    lam = thresholds_from_constants(constants, f.nu, N)
    return AlmostAnalytic(f, N, lam, kappa or Bump(), constants)


def build_family_extensions(family: FunctionFamily, N: int) -> list[AlmostAnalytic]:
    """Extensions of every member built from the family's uniform constants."""
    C = family.constants(N)
    return [build_extension(f, N, constants=C) for f in family.members()]


def dbar(ext: AlmostAnalytic, ell: int, z):
    """``dbar_ell f~(z)`` with ``dbar_ell = (d_{u_ell} + i d_{v_ell}) / 2`` (ell is 1-based)."""
    if not 1 <= ell <= ext.nu:
        raise ValueError(f"axis {ell} out of range 1..{ext.nu}")
    return ext.dbar_all(z)[ell - 1]


def decay_fit(ext: AlmostAnalytic, u0, v_path=None, direction=None):
    """|dbar f~| along ``z = u0 + i tau * direction`` and the log-log slope in tau.

    The default path stays inside the plateau where all cutoffs equal 1.
    """
    u0 = np.asarray(u0, dtype=float).reshape(ext.nu)
    if direction is None:
        direction = np.ones(ext.nu) / math.sqrt(ext.nu)
    direction = np.asarray(direction, dtype=float)
    if v_path is None:
        top = 0.9 * ext.plateau_radius * float(jbracket(u0))
        v_path = np.geomspace(1e-3 * top, top, 25)
    v_path = np.asarray(v_path, dtype=float)
    v = v_path[:, None] * direction
    D = ext.dbar_uv(u0[None, :], v)
    mag = np.sqrt(np.sum(np.abs(D) ** 2, axis=0))
    return v_path, mag, loglog_slope(v_path, mag)


@dataclass
class DecayReport:
    constants: dict          # ell -> smallest C_ell consistent with the sample
    finite: dict             # ell -> bool
    fitted_order: float
    u0: np.ndarray
    samples: int

    def to_dict(self) -> dict:
        return {
            "constants": {str(k): v for k, v in self.constants.items()},
            "finite": {str(k): v for k, v in self.finite.items()},
            "fitted_order": self.fitted_order,
            "u0": self.u0.tolist(),
            "samples": self.samples,
        }


def verify_decay(ext: AlmostAnalytic, ell_max: int, samples: int = 2000, seed: int = 0,
                 u_box: float = 5.0) -> DecayReport:
    """Estimate C_ell in |dbar f~(z)| <= C_ell <z>^(s-ell-1) |Im z|^ell on a seeded sample.

    Sample points lie in the support cone, with |v| spread over several
    decades so the small-|Im z| regime is represented.
    """
    rng = np.random.default_rng(seed)
    nu = ext.nu
    u = rng.uniform(-u_box, u_box, size=(samples, nu))
    mags = 10.0 ** rng.uniform(-4.0, 0.0, size=(samples, nu))
    signs = rng.choice([-1.0, 1.0], size=(samples, nu))
    v = signs * mags * ext.support_radius * jbracket(u)[:, None]
    D = ext.dbar_uv(u, v)
    mag = np.sqrt(np.sum(np.abs(D) ** 2, axis=0))
    zb = np.sqrt(1.0 + np.sum(u * u, axis=1) + np.sum(v * v, axis=1))
    imz = np.sqrt(np.sum(v * v, axis=1))
    consts, finite = {}, {}
    for ell in range(ell_max + 1):
        ratio = mag / (zb ** (ext.base.s - ell - 1) * imz ** ell)
        c = float(np.max(ratio))
        consts[ell] = c
        finite[ell] = bool(np.isfinite(c))
    # fitted order at a generic point where the top-order coefficient is nonzero
    u0 = rng.uniform(-1.0, 1.0, size=nu)
    _, _, slope = decay_fit(ext, u0)
    return DecayReport(consts, finite, float(slope), u0, samples)
