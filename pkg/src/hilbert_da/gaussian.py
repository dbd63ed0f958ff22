"""Gaussian measures at finite truncation.

Characteristic functional convention: ``φ(h) = E exp(-i <h, X>)``, for which
``N(a, Q)`` gives ``exp(-i <a, h> - <Q h, h> / 2)``. This is the complex
conjugate of ``exp(i <a, h> - <Q h, h> / 2)``; the two conventions carry
the same information.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DecompositionFailure, RankDeficient, ShapeMismatch
from .rng import as_generator
from .spectral_ops import SpectralOperator

SYM_TOL = 1e-10
NEG_EIG_TOL = 1e-12
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class GaussianSpec:
    """``N(mean, cov)``; ``cov`` is a dense symmetric PSD matrix or a SpectralOperator.

    A SpectralOperator covariance is read in its own basis, so draws are
    coordinate vectors in that basis (flattened for the sine basis).
    """

    mean: np.ndarray
    cov: np.ndarray | SpectralOperator

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", mean)
        if isinstance(self.cov, SpectralOperator):
            if self.cov.basis.size != mean.size:
                raise ShapeMismatch("mean and covariance dimensions differ")
            if np.any(self.cov.eigenvalues < -NEG_EIG_TOL):
                raise ValueError("covariance has negative eigenvalues")
            return
        q = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if q.shape != (mean.size, mean.size):
            raise ShapeMismatch(f"covariance {q.shape} for mean of length {mean.size}")
        scale = max(1.0, float(np.abs(q).max(initial=0.0)))
        if np.abs(q - q.T).max(initial=0.0) > SYM_TOL * scale:
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "cov", q)

    @property
    def dim(self) -> int:
        return self.mean.size

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (descending, clamped at 0) and orthonormal eigenvectors."""
        return psd_eig(self.cov)

    def dense_cov(self) -> np.ndarray:
        if isinstance(self.cov, SpectralOperator):
            return np.diag(self.cov.eigenvalues.ravel())
        return self.cov

    @property
    def trace(self) -> float:
        if isinstance(self.cov, SpectralOperator):
            return self.cov.trace
        return float(np.trace(self.cov))

    def second_moment(self) -> float:
        """E |X|² = |a|² + tr Q."""
        return float(self.mean @ self.mean) + self.trace


def psd_eig(cov) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition sorted descending, tiny negatives clamped to 0."""
    if isinstance(cov, SpectralOperator):
        lam = cov.eigenvalues.ravel().astype(float)
        order = np.argsort(-lam, kind="stable")
        vecs = np.eye(lam.size)[:, order]
        lam = lam[order]
    else:
        try:
            lam, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
        except np.linalg.LinAlgError as exc:
            raise DecompositionFailure(str(exc)) from exc
        lam, vecs = lam[::-1], vecs[:, ::-1]
    scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
    if np.any(lam < -NEG_EIG_TOL * scale):
        raise ValueError(f"covariance not PSD: min eigenvalue {lam.min():.3e}")
    return np.clip(lam, 0.0, None), vecs


@dataclass(frozen=True)
class SampleBatch:
    """Draws as rows, shape ``(count, dim)``."""

    draws: np.ndarray
    spec: GaussianSpec | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.spec is not None and x.shape[1] != self.spec.dim:
            raise ShapeMismatch("draws do not match the spec dimension")
        x.setflags(write=False)
        object.__setattr__(self, "draws", x)

    def __len__(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]

    def to_csv(self, path) -> None:
        """One draw per row; seed and shape go to a ``.meta`` sidecar."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in self.draws:
                w.writerow([repr(float(v)) for v in row])
        with open(f"{path}.meta", "w") as fh:
            fh.write(f"seed={self.seed} count={len(self)} dim={self.dim}\n")

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        draws = np.loadtxt(path, delimiter=",", ndmin=2)
        seed = None
        try:
            with open(f"{path}.meta") as fh:
                fields = dict(kv.split("=", 1) for kv in fh.read().split())
            seed = None if fields.get("seed") in (None, "None") else int(fields["seed"])
        except FileNotFoundError:
            pass
        return cls(draws, seed=seed)


def sample(spec: GaussianSpec, count: int, rng=None, seed: int | None = None) -> SampleBatch:
    """``count`` exact draws ``a + sum_n λ_n^{1/2} ξ_n u_n`` from ``N(a, Q)``."""
    if rng is None:
        rng = np.random.default_rng(seed)
    rng = as_generator(rng)
    lam, vecs = spec.eig()
    xi = rng.standard_normal((count, spec.dim))
    draws = spec.mean + (xi * np.sqrt(lam)) @ vecs.T
    return SampleBatch(draws, spec=spec, seed=seed)


@dataclass(frozen=True)
class CharFnCheck:
    empirical: complex
    exact: complex
    abs_error: float


def char_fn_exact(spec: GaussianSpec, h) -> complex:
    h = np.asarray(h, dtype=float)
    qh = spec.dense_cov() @ h
    return complex(np.exp(-1j * (spec.mean @ h) - 0.5 * (h @ qh)))


def char_fn_check(batch: SampleBatch, h, spec: GaussianSpec | None = None) -> CharFnCheck:
    """Empirical ``mean exp(-i <h, X>)`` against the exact Gaussian value."""
    spec = spec if spec is not None else batch.spec
    if spec is None:
        raise ValueError("batch carries no spec; pass one explicitly")
    h = np.asarray(h, dtype=float)
    if h.shape != (batch.dim,):
        raise ShapeMismatch(f"h has shape {h.shape}, batch dimension is {batch.dim}")
    emp = complex(np.mean(np.exp(-1j * (batch.draws @ h))))
    exact = char_fn_exact(spec, h)
    return CharFnCheck(emp, exact, abs(emp - exact))


def whitening_map(cov, K: int | None = None) -> np.ndarray:
    """``V_K diag(λ^{-1/2}) V_Kᵀ`` on the top-``K`` eigenvectors of ``cov``.

    Eigenvalues under ``1e-12 λ_max`` are never inverted; asking for more
    than the numerical rank raises :class:`RankDeficient`.
    """
    lam, vecs = psd_eig(cov)
    rank = int(np.sum(lam > RANK_RTOL * lam[0])) if lam.size and lam[0] > 0 else 0
    if K is None:
        K = rank
    if K > rank:
        raise RankDeficient(f"truncation {K} exceeds numerical rank {rank}")
    v = vecs[:, :K]
    return (v / np.sqrt(lam[:K])) @ v.T


def whiten(batch: SampleBatch, cov, K: int | None = None) -> SampleBatch:
    """Apply the truncated ``Q^{-1/2}`` to every draw (draws assumed centered)."""
    w = whitening_map(cov, K)
    return SampleBatch(batch.draws @ w.T, seed=batch.seed, meta={"whitened": K})


def white_noise_functional(z, batch: SampleBatch, cov) -> np.ndarray:
    """``<z, W X>`` for every draw X: ``sum_n λ_n^{-1/2} z_n <X, u_n>``.

    Finite-truncation action of the white noise mapping; ``z`` is given in
    the eigenbasis of ``cov`` (descending order).
    """
    lam, vecs = psd_eig(cov)
    z = np.asarray(z, dtype=float)
    keep = lam > RANK_RTOL * lam[0]
    if np.any(z[~keep]):
        raise RankDeficient("z has weight on numerically null eigendirections")
    coords = batch.draws @ vecs[:, keep]
    return coords @ (z[keep] / np.sqrt(lam[keep]))


def white_noise_growth(dims, draws_per_dim: int, rng=None) -> list[tuple[int, float]]:
    """Mean squared norm of ``draws_per_dim`` standard normal vectors per dimension.

    Equals ``d = tr I`` in expectation, unbounded as ``d`` grows.
    """
    dims = list(dims)
    if not dims:
        raise ValueError("dims must be nonempty")
    rng = as_generator(rng)
    out = []
    for d in dims:
        x = rng.standard_normal((draws_per_dim, int(d)))
        out.append((int(d), float(np.mean(np.sum(x**2, axis=1)))))
    return out


def moment_estimate(batch: SampleBatch | np.ndarray, p: float) -> float:
    """``(mean |X|^p)^{1/p}``, the empirical L^p norm of the draws."""
    if p < 1:
        raise ValueError("p must be >= 1")
    x = batch.draws if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    big = np.abs(x).max(initial=0.0)
    if big == 0.0:
        return 0.0
    # scale out the largest entry so neither the norms nor their p-th powers overflow
    norms = np.linalg.norm(x / big, axis=1)
    top = norms.max()
    return float(big * top * np.mean((norms / top) ** p) ** (1.0 / p))
