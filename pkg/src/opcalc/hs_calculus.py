"""Helffer-Sjostrand functional calculus for commuting tuples by quadrature.

    f(A) = C_nu sum_l int_{C^nu} dbar_l f~(z) (A_l - conj(z_l)) |A - z|^{-2 nu} dz

Everything is evaluated in the joint eigenbasis, where the kernel is
diagonal, so ``f(A)`` reduces to ``d`` scalar integrals sharing one node set.

Node layout.  Per real axis ``u_j = u_c + L tan(theta)`` with composite
Gauss-Legendre in ``theta``, which covers the whole real line without a
truncated tail.  The imaginary part is written ``v_j = w_j * c * <u>`` with
``c`` the support radius of ``f~``, so ``|w_j| <= 1`` contains the support and
the cutoff layers of ``f~`` sit at fixed ``w``.  The ``w`` panels break at
those layers and are mirrored about ``w = 0``, which is never a node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .aae import AlmostAnalytic, build_extension
from .functions import CutoffProduct, SmoothFunction, cutoff_family
from .multiindex import power
from .operator_model import CommutingTuple, jbracket, op_norm, spectral_apply
from .symdiff import KernelFactor

__all__ = ["QuadratureSpec", "default_quadrature", "hs_constant", "hs_apply", "hs_apply_cutoff",
           "hs_raw", "calibrate_constant", "Calibration", "quad_error_estimate",
           "refinement_error", "absolute_mass", "integrate", "SingularNode"]


class SingularNode(ZeroDivisionError):
    """A quadrature node landed on the joint spectrum."""


@dataclass(frozen=True)
class QuadratureSpec:
    nu: int
    nodes: int                 # Gauss-Legendre nodes per panel
    w_breaks: tuple            # interior breakpoints of |w| in (0, 1), ascending
    support: float             # v_j = w_j * support * <u>
    levels: int = 0            # every base panel is bisected this many times
    u_center: tuple = None
    u_scale: float = 1.0
    u_panels: int = 8          # base panels of the angle variable per axis
    w_nodes: int = None        # nodes per w panel (defaults to ``nodes``)
    grading: int = 0           # geometric panels toward u_center on each side, per axis
    u_min: float = 1e-3        # innermost graded panel width in u
    layout: str = "box"        # "box": one tensor u-grid; "polar": graded grid about each eigenpoint
    angles: int = 16           # trapezoid nodes in the polar angle
    chunk: int = 8_000_000     # target number of complex entries per work block

    def __post_init__(self):
        if self.w_nodes is None:
            object.__setattr__(self, "w_nodes", self.nodes)
        if self.nodes < 2 or self.w_nodes < 2:
            raise ValueError("need at least 2 nodes per panel")
        if self.levels < 0 or self.u_panels < 1 or self.grading < 0:
            raise ValueError("levels and grading must be >= 0 and u_panels >= 1")
        if self.grading and (self.u_panels % 2 or self.u_min <= 0):
            raise ValueError("grading needs an even u_panels and a positive u_min")
        if self.layout not in ("box", "polar"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "polar" and (self.nu > 2 or self.u_panels % 2 or self.angles < 3):
            raise ValueError("polar layout needs nu <= 2, an even u_panels and angles >= 3")
        if self.support <= 0 or self.u_scale <= 0:
            raise ValueError("support and u_scale must be positive")
        br = tuple(sorted(float(b) for b in self.w_breaks))
        if any(not 0 < b < 1 for b in br):
            raise ValueError("w breakpoints must lie in (0, 1)")
        object.__setattr__(self, "w_breaks", br)
        c = (0.0,) * self.nu if self.u_center is None else tuple(float(x) for x in self.u_center)
        if len(c) != self.nu:
            raise ValueError("u_center length does not match nu")
        object.__setattr__(self, "u_center", c)

    def refined(self, extra: int = 1) -> "QuadratureSpec":
        return replace(self, levels=self.levels + extra)

    def u_rule(self):
        """Nodes and weights of one real axis (before centering)."""
        edges = np.linspace(-math.pi / 2, math.pi / 2, self.u_panels + 1)
        if self.grading:
            # geometric panels toward the center replace the two central ones
            top = edges[self.u_panels // 2 + 1]
            low = min(math.atan(self.u_min / self.u_scale), top / 4)
            inner = np.geomspace(low, top, self.grading + 1)[:-1]
            half = edges[self.u_panels // 2 + 1:]
            right = np.concatenate([inner, half])
            edges = np.concatenate([-right[::-1], [0.0], right])
        theta, wt = _composite(edges, self.nodes, self.levels)
        return self.u_scale * np.tan(theta), wt * self.u_scale / np.cos(theta) ** 2

    def u_points(self):
        """Points (relative to ``u_center``) and weights of the u-grid; shapes (Mu, nu), (Mu,)."""
        x, wx = self.u_rule()
        if self.layout == "box" or self.nu == 1:
            return _tensor(x, wx, self.nu)
        # radius from the positive half of the axis rule, periodic trapezoid in the angle
        keep = x > 0
        r, wr = x[keep], wx[keep]
        m = self.angles * 2 ** self.levels
        phi = 2 * math.pi * (np.arange(m) + 0.5) / m
        pts = r[:, None, None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)[None]
        wts = (wr * r)[:, None] * np.full(m, 2 * math.pi / m)[None]
        return pts.reshape(-1, 2), wts.ravel()

    def w_rule(self):
        edges = np.array((0.0,) + self.w_breaks + (1.0,))
        x, wt = _composite(edges, self.w_nodes, self.levels)
        return np.concatenate([-x[::-1], x]), np.concatenate([wt[::-1], wt])

    def grids(self, half: bool = False):
        """Tensor grids ``(u, wu, w, ww)`` with shapes (Mu, nu), (Mu,), (Mw, nu), (Mw,).

        With ``half`` only nodes with ``w_1 > 0`` are kept and their weights doubled.
        """
        u, wu = self.u_points()
        s, ws = self.w_rule()
        w, ww = _tensor(s, ws, self.nu)
        if half:
            keep = w[:, 0] > 0
            w, ww = w[keep], 2.0 * ww[keep]
        return u + np.array(self.u_center), wu, w, ww

    @property
    def size(self) -> int:
        per_u = (self.u_panels + 2 * self.grading) * 2 ** self.levels * self.nodes
        per_w = 2 * (len(self.w_breaks) + 1) * 2 ** self.levels * self.w_nodes
        if self.layout == "polar" and self.nu == 2:
            return per_u // 2 * self.angles * 2 ** self.levels * per_w ** 2
        return (per_u * per_w) ** self.nu

    def to_dict(self) -> dict:
        return {"nu": self.nu, "nodes": self.nodes, "w_nodes": self.w_nodes, "levels": self.levels,
                "w_breaks": list(self.w_breaks), "support": self.support,
                "u_center": list(self.u_center), "u_scale": self.u_scale,
                "u_panels": self.u_panels, "grading": self.grading, "u_min": self.u_min,
                "layout": self.layout, "angles": self.angles,
                "size": self.size}


def _composite(edges, n, levels):
    x0, w0 = np.polynomial.legendre.leggauss(n)
    fine = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        fine.extend(np.linspace(a, b, 2 ** levels + 1)[1:])
    fine = np.asarray(fine)
    a, b = fine[:-1, None], fine[1:, None]
    x = 0.5 * (b - a) * x0 + 0.5 * (a + b)
    w = 0.5 * (b - a) * w0
    return x.ravel(), np.broadcast_to(w, x.shape).ravel()


def _tensor(x, w, nu):
    grids = np.meshgrid(*([x] * nu), indexing="ij")
    wgrids = np.meshgrid(*([w] * nu), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, wts


W_FLOOR = 1e-3


def layer_breaks(ext: AlmostAnalytic, floor: float = W_FLOOR) -> tuple:
    """Scaled positions of the cutoff layers of ``ext`` (values below ``floor`` dropped)."""
    lam0 = ext.thresholds[0]
    k = ext.kappa
    out = set()
    for lam in ext.thresholds:
        for edge in (k.plateau, k.support):
            b = edge * lam0 / (lam * k.support)
            if floor <= b < 1 - 1e-12:
                out.add(b)
    merged = []
    for b in sorted(out):
        # coincident layers would only create sliver panels
        if not merged or b > merged[-1] * (1 + 1e-2):
            merged.append(b)
    return tuple(merged)


# nodes are per panel; see QuadratureSpec.size for the resulting node count
DEFAULT_BUDGET = {
    1: dict(nodes=24, levels=2, u_panels=8, w_nodes=24),
    2: dict(nodes=4, levels=0, u_panels=6, w_nodes=10, layout="polar", grading=6, u_min=1e-3, angles=8),
}
FALLBACK_BUDGET = dict(nodes=4, levels=0, u_panels=4, w_nodes=6)


def default_quadrature(ext: AlmostAnalytic, A: CommutingTuple | None = None, **overrides) -> QuadratureSpec:
    """Node layout adapted to the layers of ``ext`` and the spectral radius of ``A``.

    Keyword overrides replace entries of the per-dimension budget.
    """
    budget = dict(DEFAULT_BUDGET.get(ext.nu, FALLBACK_BUDGET))
    budget.update({k: v for k, v in overrides.items() if v is not None})
    scale = 1.0 if A is None else max(1.0, A.max_norm())
    if isinstance(ext.base, CutoffProduct):
        # the cutoff layer near |x| = k must be resolved too
        scale = max(scale, ext.base.k / 2)
    return QuadratureSpec(nu=ext.nu, w_breaks=layer_breaks(ext), support=ext.support_radius,
                          u_scale=scale, **budget)


def hs_constant(nu: int) -> float:
    """``C_nu = (nu - 1)! / pi^nu``."""
    if nu < 1:
        raise ValueError("nu must be positive")
    return math.factorial(nu - 1) / math.pi ** nu


def integrate(exts: Sequence[AlmostAnalytic], quad: QuadratureSpec,
              consumer: Callable, width: int = 1):
    """Feed weighted dbar values to ``consumer`` block by block.

    For each block of u-nodes ``consumer(u, v, parts)`` is called with
    ``u`` of shape (Cu, nu), ``v`` of shape (Cu, Mw, nu) and ``parts[e]``
    a pair ``(re, im)`` of real arrays of shape (nu, Cu, Mw) holding the
    real and imaginary parts of ``weight * dbar_l f~_e``.

    Only the half space ``w_1 > 0`` is visited, with doubled weights.  For
    real ``f`` and a kernel with real coefficients in ``(z, conj z)`` the
    integrand at ``-v`` is the conjugate of the one at ``v``, so the full
    integral is the real part of the accumulated sum; consumers must take it.

    ``width`` is the number of real entries the consumer allocates per
    node and sizes the blocks.  Blocks are visited in a fixed order, so sums
    are reproducible.
    """
    nu = quad.nu
    for e in exts:
        if e.nu != nu:
            raise ValueError("extension and quadrature dimensions differ")
    u, wu, w, ww = quad.grids(half=True)
    Mw = len(ww)
    block = max(1, quad.chunk // (Mw * max(width, 2 * len(exts) * nu)))
    wfac = {}
    for e in exts:
        key = (e.thresholds, e.kappa, e.N)
        if key not in wfac:
            common, per = e.w_factors(w, quad.support)
            # the weight is separable, so the w part is folded in here
            wfac[key] = [np.vstack([common, per[l]]) * ww[None, :] for l in range(nu)]
    scale = quad.support * jbracket(u)
    wt = (wu * scale ** nu)[:, None]
    ufac = []
    for e in exts:
        U = e.u_factors(u, quad.support)
        ufac.append([(np.ascontiguousarray(wt * U[l].real), np.ascontiguousarray(wt * U[l].imag))
                     for l in range(nu)])
    for start in range(0, len(wu), block):
        sl = slice(start, start + block)
        uc = u[sl]
        v = w[None, :, :] * scale[sl, None, None]
        parts = []
        for e, U in zip(exts, ufac):
            W = wfac[(e.thresholds, e.kappa, e.N)]
            re = np.empty((nu, len(uc), Mw))
            im = np.empty((nu, len(uc), Mw))
            for l in range(nu):
                np.matmul(U[l][0][sl], W[l], out=re[l])
                np.matmul(U[l][1][sl], W[l], out=im[l])
            parts.append((re, im))
        consumer(uc, v, parts)


def hs_kernels(nu: int) -> tuple:
    """``(t_l - conj(z_l)) |t - z|^{-2 nu}`` for l = 1..nu."""
    g = KernelFactor.g_power(nu, nu)
    return tuple(KernelFactor.linear(nu, l, conj=True) * g for l in range(1, nu + 1))


def _kernel_plan(kernels, nu):
    """Flatten kernels into weight arrays keyed by (l, key) and records (j, wid, m, gamma, c)."""
    wids, records = {}, []
    for j, per_axis in enumerate(kernels):
        if len(per_axis) != nu:
            raise ValueError("each kernel needs one factor per axis")
        for l, F in enumerate(per_axis):
            for key, S in F.parts.items():
                wid = wids.setdefault((l, key), len(wids))
                for c, gamma, m in S:
                    records.append((j, wid, m, gamma, float(c)))
    return list(wids), records


def point_integrals(T, exts: Sequence[AlmostAnalytic], quad: QuadratureSpec, kernels) -> np.ndarray:
    """Raw integrals ``sum_l int dbar_l f~_e(z) F_{j,l}(t_k, z) dz`` (without C_nu).

    ``kernels[j]`` holds one :class:`KernelFactor` per axis ``l``.  Returns a
    real array of shape (len(exts), len(T), len(kernels)).

    A factor is ``sum_key i^|key| s_key v^key S_key`` with ``S_key`` a sum of
    ``c y^gamma q^{-m}``, ``y = t - u`` and ``q = |t - z|^2``.  Grouping by
    ``m`` leaves one reduction over the w-nodes per (weight array, m) and
    eigenpoint; the monomials in ``y`` depend on ``u`` only.
    """
    T = np.asarray(T, dtype=float)
    if quad.layout == "polar":
        # one grid per eigenpoint, centered there
        return np.concatenate([_sweep(T[k:k + 1], exts, replace(quad, u_center=tuple(T[k])), kernels)
                               for k in range(len(T))], axis=1)
    return _sweep(T, exts, quad, kernels)


def _sweep(T, exts, quad, kernels):
    d, nu = T.shape
    wids, records = _kernel_plan(kernels, nu)
    ms = sorted({r[2] for r in records})
    by_m = {m: [r for r in records if r[2] == m] for m in ms}
    E = len(exts)
    acc = np.zeros((E, d, len(kernels)))

    def consumer(u, v, parts):
        vv = np.sum(v * v, axis=-1)
        X = np.empty((len(wids), E) + vv.shape)
        for i, (l, key) in enumerate(wids):
            # Re(p * prod_(a, s) (s i v_a)) as a real array
            k = len(key)
            sign = math.prod(sg for _, sg in key)
            V = sign * math.prod((v[..., a - 1] for a, _ in key), start=np.ones_like(vv))
            for e, (re, im) in enumerate(parts):
                base = (re[l], -im[l], -re[l], im[l])[k % 4]
                X[i, e] = base * V
        for kk in range(d):
            y = T[kk] - u
            q = np.sum(y * y, axis=-1)[:, None] + vv
            if np.any(q == 0):
                raise SingularNode("quadrature node on the joint spectrum")
            inv = 1.0 / q
            Q = inv ** ms[0]
            mono = {}
            for idx, m in enumerate(ms):
                if idx:
                    Q = Q * inv ** (m - ms[idx - 1])
                P = np.einsum("xeuw,uw->xeu", X, Q)
                for j, wid, _, gamma, c in by_m[m]:
                    if gamma not in mono:
                        mono[gamma] = power(y, gamma) * np.ones(len(u))
                    acc[:, kk, j] += c * (P[wid] @ mono[gamma])

    integrate(exts, quad, consumer, width=2 * len(wids) * E + 4)
    return acc


def hs_raw_diagonal(T, exts: Sequence[AlmostAnalytic], quad: QuadratureSpec) -> np.ndarray:
    """Raw integrals (without C_nu) at eigenpoints ``T``; shape (len(exts), d)."""
    T = np.asarray(T, dtype=float)
    return point_integrals(T, exts, quad, [hs_kernels(T.shape[1])])[:, :, 0]


def hs_raw(A: CommutingTuple, ext: AlmostAnalytic, quad: QuadratureSpec) -> np.ndarray:
    """The integral without the constant ``C_nu``, as a matrix."""
    return A.diag_to_matrix(hs_raw_diagonal(A.spectrum, [ext], quad)[0])


def hs_apply(A: CommutingTuple, ext: AlmostAnalytic, quad: QuadratureSpec | None = None) -> np.ndarray:
    """Quadrature approximation of ``f(A)``.

    Functions with ``s >= 0`` must come from :func:`cutoff_family`; see
    :func:`hs_apply_cutoff`.
    """
    _check_decay(ext)
    if quad is None:
        quad = default_quadrature(ext, A)
    return hs_constant(A.nu) * hs_raw(A, ext, quad)


def _check_decay(ext: AlmostAnalytic) -> None:
    if ext.base.s >= 0 and not isinstance(ext.base, CutoffProduct):
        raise ValueError(f"{ext.base.name} has s = {ext.base.s:g} >= 0; the integral need not "
                         "converge, use hs_apply_cutoff")


def hs_apply_many(A: CommutingTuple, exts: Sequence[AlmostAnalytic],
                  quad: QuadratureSpec) -> list[np.ndarray]:
    for ext in exts:
        _check_decay(ext)
    diag = hs_constant(A.nu) * hs_raw_diagonal(A.spectrum, exts, quad)
    return [A.diag_to_matrix(row) for row in diag]


@dataclass
class CutoffConvergence:
    ks: list
    values: list          # f_k(A) by quadrature, one per k
    steps: list           # ||f_k(A) - f_{k_prev}(A)||, None for the first k
    errors: list          # ||f_k(A) - f(A)|| against the spectral oracle
    estimates: list       # refinement estimates per k

    def to_dict(self) -> dict:
        return {"ks": self.ks, "steps": self.steps, "errors": self.errors,
                "estimates": self.estimates}


def hs_apply_cutoff(A: CommutingTuple, f: SmoothFunction, N: int, ks: Sequence[float],
                    chi: SmoothFunction | None = None, estimate: bool = True,
                    **quad_overrides) -> CutoffConvergence:
    """``f(A)`` through ``f_k = chi(x/k) f`` for increasing ``k``, with the k-convergence record.

    This is the route for ``s >= 0``: each ``f_k`` is compactly supported and
    ``f_k(A) = f(A)`` once ``chi(x/k) = 1`` on the spectrum.
    """
    ks = [float(k) for k in ks]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("ks must be a non-empty increasing sequence")
    exact = spectral_apply(A, f)
    values, steps, errors, ests = [], [], [], []
    for k in ks:
        ext = build_extension(cutoff_family(f, chi, k), N)
        quad = default_quadrature(ext, A, **quad_overrides)
        F = hs_apply(A, ext, quad)
        steps.append(op_norm(F - values[-1]) if values else None)
        values.append(F)
        errors.append(op_norm(F - exact))
        ests.append(quad_error_estimate(A, ext, quad) if estimate else None)
    return CutoffConvergence(ks, values, steps, errors, ests)


@dataclass
class Calibration:
    constant: float
    residual: float        # ||c * raw - f(A)|| after calibration (operator norm)
    raw_norm: float
    expected: float

    @property
    def relative_error(self) -> float:
        return abs(self.constant - self.expected) / self.expected

    def to_dict(self) -> dict:
        return {"constant": self.constant, "expected": self.expected,
                "relative_error": self.relative_error, "residual": self.residual,
                "raw_norm": self.raw_norm}


def calibrate_constant(A: CommutingTuple, ext: AlmostAnalytic, quad: QuadratureSpec | None = None,
                       rtol: float = 1e-8) -> Calibration:
    """Least-squares scalar ``c`` with ``c * raw ~ f(A)`` in Frobenius norm."""
    if quad is None:
        quad = default_quadrature(ext, A)
    raw = hs_raw(A, ext, quad)
    target = spectral_apply(A, ext.base)
    denom = float(np.vdot(raw, raw).real)
    if denom <= (rtol * max(1.0, np.linalg.norm(target))) ** 2:
        raise ArithmeticError("raw integral is numerically zero; calibration is ill-conditioned")
    c = float(np.vdot(raw, target).real / denom)
    return Calibration(c, op_norm(c * raw - target), math.sqrt(denom), hs_constant(A.nu))


def refinement_error(compute: Callable[[QuadratureSpec], np.ndarray], quad: QuadratureSpec) -> float:
    """``||compute(quad) - compute(refined quad)||`` with one extra bisection level."""
    return op_norm(compute(quad) - compute(quad.refined()))


def quad_error_estimate(A: CommutingTuple, ext: AlmostAnalytic, quad: QuadratureSpec | None = None) -> float:
    if quad is None:
        quad = default_quadrature(ext, A)
    return refinement_error(lambda q: hs_apply(A, ext, q), quad)


def absolute_mass(A: CommutingTuple, ext: AlmostAnalytic, quad: QuadratureSpec) -> float:
    """``sum_nodes weight |dbar_l f~| ||kernel_l||``: finite iff the integral converges absolutely."""
    T = A.spectrum
    nu = A.nu
    total = [0.0]

    def consumer(u, v, parts):
        vv = np.sum(v * v, axis=-1)
        kmax = np.zeros((nu,) + vv.shape)
        for k in range(A.d):
            du = T[k] - u
            q = np.sum(du * du, axis=-1)[:, None] + vv
            for l in range(nu):
                kmax[l] = np.maximum(kmax[l], np.abs(du[:, l, None] + 1j * v[..., l]) / q ** nu)
        re, im = parts[0]
        total[0] += float(np.sum(np.hypot(re, im) * kmax))

    integrate([ext], quad, consumer, width=A.d)
    return hs_constant(nu) * total[0]
