"""Dense and spectral operator algebra.

Dense operators are plain 2-D numpy arrays. Self-adjoint operators that are
diagonal in a known orthonormal basis are held as :class:`SpectralOperator`,
i.e. just their eigenvalues plus a label for the basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import NonFiniteResult, ShapeMismatch, SingularInnerSystem

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class Basis:
    """Label of an orthonormal basis.

    ``kind`` is ``"sine"`` (shape ``(m, n)``, modes indexed by ``(k, l)``)
    or ``"abstract"`` (shape ``(dim,)``).
    """

    kind: str
    shape: tuple[int, ...]

    @classmethod
    def sine(cls, m: int, n: int) -> "Basis":
        return cls("sine", (int(m), int(n)))

    @classmethod
    def abstract(cls, dim: int) -> "Basis":
        return cls("abstract", (int(dim),))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class SpectralOperator:
    """Self-adjoint operator given by its eigenvalues on ``basis``.

    ``eigenvalues`` has shape ``basis.shape``; for the sine basis entry
    ``[k-1, l-1]`` belongs to mode ``(k, l)``.
    """

    basis: Basis
    eigenvalues: np.ndarray
    psd: bool = field(default=False)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.shape != self.basis.shape:
            if lam.size != self.basis.size:
                raise ShapeMismatch(
                    f"{lam.size} eigenvalues for a basis of size {self.basis.size}")
            lam = lam.reshape(self.basis.shape)
        if self.psd and np.any(lam < 0):
            raise ValueError("operator flagged PSD has negative eigenvalues")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def diagonal(cls, eigenvalues, psd: bool = False) -> "SpectralOperator":
        lam = np.asarray(eigenvalues, dtype=float).ravel()
        return cls(Basis.abstract(lam.size), lam, psd=psd)

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def to_dense(self) -> np.ndarray:
        """Matrix in the operator's own basis (diagonal)."""
        return np.diag(self.eigenvalues.ravel())


def tensor_product(x, y) -> np.ndarray:
    """Rank-one operator ``x ⊗ y``, i.e. ``z -> <y, z> x``; entries ``x[i] y[j]``."""
    return np.outer(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def singular_values(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros(0)
    return np.linalg.svd(a, compute_uv=False)


def operator_norms(a) -> tuple[float, float, float]:
    """Operator, Hilbert-Schmidt and trace norm of a dense operator.

    All three come from the singular values, so ``op <= hs <= trace``
    holds up to rounding.
    """
    s = singular_values(a)
    if s.size == 0:
        return 0.0, 0.0, 0.0
    return float(s[0]), float(np.sqrt(np.sum(s**2))), float(np.sum(s))


def op_norm(a) -> float:
    return operator_norms(a)[0]


def hs_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def apply_function(f: Callable, op: SpectralOperator) -> SpectralOperator:
    """``f(op)`` by the spectral mapping theorem: same basis, eigenvalues ``f(λ)``."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lam = np.asarray(f(op.eigenvalues), dtype=float)
    if lam.shape != op.eigenvalues.shape:
        lam = np.broadcast_to(lam, op.eigenvalues.shape).copy()
    bad = ~np.isfinite(lam)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise NonFiniteResult(
            f"f(λ) not finite at index {tuple(int(i) for i in idx)} "
            f"(λ = {op.eigenvalues[tuple(idx)]!r})")
    return SpectralOperator(op.basis, lam, psd=bool(np.all(lam >= 0)))


def smw_solve(a_inv_apply: Callable, u, c_inv, v, rhs, tol: float = 1e-12):
    """Solve ``(A + U C V) x = rhs`` by the Sherman-Morrison-Woodbury formula.

    ``a_inv_apply(b)`` must return ``A^{-1} b`` for a vector or a matrix of
    columns ``b``. Only the small system ``C^{-1} + V A^{-1} U`` is factored.
    ``rhs`` may be a vector or a 2-D array of right-hand sides.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    c_inv = np.atleast_2d(np.asarray(c_inv, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    if u.shape[1] != c_inv.shape[0] or c_inv.shape[1] != v.shape[0]:
        raise ShapeMismatch(f"U {u.shape}, C^-1 {c_inv.shape}, V {v.shape}")

    a_inv_rhs = np.asarray(a_inv_apply(rhs), dtype=float)
    if not np.any(u) or not np.any(v):
        return a_inv_rhs
    a_inv_u = np.asarray(a_inv_apply(u), dtype=float)
    inner = c_inv + v @ a_inv_u
    s = singular_values(inner)
    if s.size and (s[-1] <= tol * max(s[0], 1.0)):
        raise SingularInnerSystem(
            f"inner system singular: σ_min = {s[-1]:.3e}, σ_max = {s[0]:.3e}")
    corr = np.linalg.solve(inner, v @ a_inv_rhs)
    return a_inv_rhs - a_inv_u @ corr


def _range_basis(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    uu, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[0], 0))
    return uu[:, s > rtol * s[0]]


def svd_factors(a, rtol: float = RANK_RTOL):
    """Thin SVD truncated at numerical rank: ``(U_p, s_p, V_p)`` with ``A ≈ U_p diag(s_p) V_pᵀ``."""
    a = np.asarray(a, dtype=float)
    uu, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return uu[:, :0], s[:0], vt[:0].T
    keep = s > rtol * s[0]
    return uu[:, keep], s[keep], vt[keep].T


def range_equal_diagnostic(a, angle_tol: float = 1e-8) -> bool:
    """True iff ``Range(A Aᵀ)`` and ``Range(A)`` coincide numerically.

    Compares orthonormal range bases from the SVD: equal rank and all
    principal angles below ``angle_tol``.
    """
    a = np.asarray(a, dtype=float)
    ra = _range_basis(a)
    p = ra.shape[1]
    if p == 0:
        return not np.any(a @ a.T)
    # AAᵀ has singular values σ²; keep A's numerical rank instead of
    # thresholding σ², which would count round-off as rank
    uu, s2, _ = np.linalg.svd(a @ a.T)
    if s2[p - 1] <= 0.0 or (p < s2.size and s2[p] > RANK_RTOL * s2[0]):
        return False
    angles = sla.subspace_angles(ra, uu[:, :p])
    return bool(np.max(angles) < angle_tol)
