"""Commuting Hermitian tuples, iterated commutators and the spectral oracle.

A :class:`CommutingTuple` is stored through its joint eigendecomposition
``A_j = U diag(spectrum[:, j]) U*``; every function of ``A`` is evaluated in
that basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import multiindex as mi


def jbracket(x, axis=-1):
    """Japanese bracket ``<x> = (1 + |x|^2)^(1/2)`` over the last axis."""
    x = np.asarray(x)
    return np.sqrt(1.0 + np.sum(np.abs(x) ** 2, axis=axis))


@dataclass(frozen=True)
class CommutingTuple:
    basis: np.ndarray     # (d, d) unitary
    spectrum: np.ndarray  # (d, nu) joint eigenvalues, row k belongs to basis[:, k]
    matrices: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        U = np.asarray(self.basis, dtype=complex)
        lam = np.asarray(self.spectrum, dtype=float)
        if lam.ndim != 2 or U.shape != (lam.shape[0], lam.shape[0]):
            raise ValueError("basis must be (d, d) and spectrum (d, nu)")
        U.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "basis", U)
        object.__setattr__(self, "spectrum", lam)
        mats = []
        for j in range(lam.shape[1]):
            M = (U * lam[:, j]) @ U.conj().T
            M = 0.5 * (M + M.conj().T)
            M.setflags(write=False)
            mats.append(M)
        object.__setattr__(self, "matrices", tuple(mats))

    @property
    def d(self) -> int:
        return self.spectrum.shape[0]

    @property
    def nu(self) -> int:
        return self.spectrum.shape[1]

    def __getitem__(self, j: int) -> np.ndarray:
        """Component ``A_j`` (1-based)."""
        if not 1 <= j <= self.nu:
            raise IndexError(f"component {j} out of range 1..{self.nu}")
        return self.matrices[j - 1]

    def to_eigenbasis(self, M) -> np.ndarray:
        return self.basis.conj().T @ np.asarray(M) @ self.basis

    def from_eigenbasis(self, M) -> np.ndarray:
        return self.basis @ np.asarray(M) @ self.basis.conj().T

    def diag_to_matrix(self, values) -> np.ndarray:
        """``U diag(values) U*``."""
        return (self.basis * np.asarray(values)) @ self.basis.conj().T

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.spectrum))) if self.spectrum.size else 0.0

    def invariant_violations(self, tol: float = 1e-12) -> list[str]:
        """Empty when the tuple is Hermitian, commuting and reconstructs."""
        problems = []
        d = self.d
        gram = self.basis.conj().T @ self.basis
        if not np.allclose(gram, np.eye(d), atol=1e-10):
            problems.append("basis is not unitary")
        norms = [max(op_norm(M), 1.0) for M in self.matrices]
        for j, M in enumerate(self.matrices):
            if op_norm(M - M.conj().T) > tol * norms[j]:
                problems.append(f"A_{j + 1} is not Hermitian")
            recon = self.diag_to_matrix(self.spectrum[:, j])
            if op_norm(recon - M) > 1e-10 * norms[j]:
                problems.append(f"A_{j + 1} does not match its eigendecomposition")
        for i in range(self.nu):
            for j in range(i + 1, self.nu):
                Ai, Aj = self.matrices[i], self.matrices[j]
                if op_norm(Ai @ Aj - Aj @ Ai) > tol * norms[i] * norms[j]:
                    problems.append(f"A_{i + 1} and A_{j + 1} do not commute")
        return problems


def make_commuting_tuple(seed: int, nu: int, d: int, spectrum_scale: float = 1.0) -> CommutingTuple:
    """Random commuting tuple ``A_j = U D_j U*``.

    ``U`` is Haar-distributed (phase-corrected QR of a complex Gaussian);
    the ``D_j`` have i.i.d. entries uniform in ``[-scale, scale]``.
    """
    if d < 1 or nu < 1 or spectrum_scale < 0:
        raise ValueError("need d >= 1, nu >= 1, spectrum_scale >= 0")
    rng = np.random.default_rng(seed)
    G = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(G)
    phases = np.diagonal(R) / np.abs(np.diagonal(R))
    U = Q * phases
    lam = rng.uniform(-spectrum_scale, spectrum_scale, size=(d, nu))
    return CommutingTuple(U, lam)


def random_operator(seed: int, d: int, hermitian: bool = False) -> np.ndarray:
    rng = np.random.default_rng(seed)
    B = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2 * d)
    if hermitian:
        B = 0.5 * (B + B.conj().T)
    return B


def commutator(X, Y) -> np.ndarray:
    return X @ Y - Y @ X


def iterated_commutator(A: CommutingTuple, B, alpha, order: Sequence[int] | None = None) -> np.ndarray:
    """``ad_A^alpha(B)`` with ``ad_A^{delta_j}(X) = [X, A_j]``.

    ``order`` lists the axes (1-based) in application order; by default all
    axis-1 commutators are taken first, then axis 2, and so on.
    """
    alpha = mi.MultiIndex(alpha)
    if len(alpha) != A.nu:
        raise ValueError("multi-index length does not match the tuple")
    if order is None:
        order = [j + 1 for j, a in enumerate(alpha) for _ in range(a)]
    elif sorted(order) != sorted(j + 1 for j, a in enumerate(alpha) for _ in range(a)):
        raise ValueError("axis order does not match the multi-index")
    X = np.array(B, dtype=complex)
    for j in order:
        X = commutator(X, A[j])
    return X


def resolvent_kernel(A: CommutingTuple, z) -> np.ndarray:
    """``|A - z|^{-2} = (sum_j (A_j - Re z_j)^2 + (Im z_j)^2)^{-1}``."""
    z = np.asarray(z, dtype=complex)
    q = np.sum((A.spectrum - z.real) ** 2, axis=1) + np.sum(z.imag ** 2)
    if np.any(q == 0):
        raise ZeroDivisionError("z lies on the joint spectrum")
    return A.diag_to_matrix(1.0 / q)


@dataclass(frozen=True)
class WeightPower:
    exponent: float
    matrix: np.ndarray


def weight(A: CommutingTuple, t: float) -> WeightPower:
    """``<A>^t = (I + sum_j A_j^2)^(t/2)``."""
    return WeightPower(float(t), A.diag_to_matrix(weight_diagonal(A, t)))


def weight_diagonal(A: CommutingTuple, t: float) -> np.ndarray:
    return jbracket(A.spectrum) ** t


def spectral_apply(A: CommutingTuple, f: Callable) -> np.ndarray:
    """``U diag(f(spectrum)) U*``; ``f`` gets the ``(d, nu)`` spectrum array."""
    vals = np.asarray(f(A.spectrum))
    if vals.shape != (A.d,):
        vals = np.broadcast_to(vals, (A.d,))
    return A.diag_to_matrix(vals)


def op_norm(M) -> float:
    """Spectral norm (largest singular value)."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def matrix_to_json(M) -> dict:
    """Row-major ``[re, im]`` pairs."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return {
        "shape": list(M.shape),
        "data": [[float(x.real), float(x.imag)] for x in M.ravel()],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    shape = tuple(obj["shape"])
    data = np.array([complex(re, im) for re, im in obj["data"]], dtype=complex)
    return data.reshape(shape)
