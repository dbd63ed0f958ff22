"""Analysis and forecast steps: Kalman/OSI, EnKF with perturbed data, ETKF.

Ensembles are arrays with members as columns, shape ``(n_state, N)``;
ensemble covariances use the divisor ``N - 1`` throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .ensemble_stats import as_ensemble, sample_cov
from .errors import (AllWeightsZero, ConsistencyError, DegenerateEnsemble,
                     ShapeMismatch, SingularInnovation, SingularR)
from .rng import as_generator
from .spectral_ops import smw_solve

SYM_TOL = 1e-10
R_MIN_EIG = 1e-12
CHECK_RTOL = 1e-8
# skip cross-form checks whose conditioning makes 1e-8 meaningless
CHECK_MAX_COND = 1e6


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _rel_err(a, b) -> float:
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


def check_R(R) -> np.ndarray:
    """Validate a data error covariance: symmetric, min eigenvalue above 1e-12."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise SingularR(f"R must be square, got {R.shape}")
    scale = max(1.0, float(np.abs(R).max(initial=0.0)))
    if np.abs(R - R.T).max(initial=0.0) > SYM_TOL * scale:
        raise SingularR("R is not symmetric")
    if R.size and np.linalg.eigvalsh(R).min() <= R_MIN_EIG:
        raise SingularR("R is not positive definite")
    return R


@dataclass(frozen=True)
class KfState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=float))
        q = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if q.shape != (mu.size, mu.size):
            raise ShapeMismatch(f"cov {q.shape} for mean of length {mu.size}")
        scale = max(1.0, float(np.abs(q).max(initial=0.0)))
        if np.abs(q - q.T).max(initial=0.0) > SYM_TOL * scale:
            raise ValueError("state covariance is not symmetric")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", q)


@dataclass(frozen=True)
class ObservationModel:
    """Linear observation ``d ~ N(H x, R)``."""

    H: np.ndarray
    R: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        R = check_R(self.R)
        if H.shape[0] != d.size or R.shape[0] != d.size:
            raise ShapeMismatch(f"H {H.shape}, R {R.shape}, d {d.shape}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "d", d)

    @property
    def m_obs(self) -> int:
        return self.d.size

    def with_data(self, d) -> "ObservationModel":
        return ObservationModel(self.H, self.R, d)


@dataclass(frozen=True)
class LinearModel:
    """``x -> A x + f``; ``D`` is added to forecast covariances."""

    A: np.ndarray
    f: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        f = np.zeros(n) if self.f is None else np.atleast_1d(np.asarray(self.f, dtype=float))
        D = np.zeros((n, n)) if self.D is None else np.atleast_2d(np.asarray(self.D, dtype=float))
        if A.shape != (n, n) or f.shape != (n,) or D.shape != (n, n):
            raise ShapeMismatch("inconsistent model shapes")
        if np.linalg.eigvalsh(_sym(D)).min(initial=0.0) < -1e-12:
            raise ValueError("D must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "D", D)

    def advance(self, x: np.ndarray) -> np.ndarray:
        """Apply to a state vector or to every column of an ensemble."""
        x = np.asarray(x, dtype=float)
        return self.A @ x + (self.f if x.ndim == 1 else self.f[:, None])


# Kalman filter / optimal statistical interpolation --------------------------

def kalman_gain(Q, H, R) -> np.ndarray:
    """``K = Q Hᵀ (H Q Hᵀ + R)^{-1}`` by a Cholesky solve of the innovation matrix."""
    S = _sym(H @ Q @ H.T + R)
    try:
        cf = sla.cho_factor(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    return sla.cho_solve(cf, H @ Q).T


def osi_precision_form(prior: KfState, obs: ObservationModel) -> tuple[np.ndarray, np.ndarray]:
    """Posterior from ``(Q^{-1} + Hᵀ R^{-1} H)`` and ``Q^{-1} μ + Hᵀ R^{-1} d``; needs Q invertible."""
    Q, H, R = prior.cov, obs.H, obs.R
    Rinv_H = np.linalg.solve(R, H)
    Rinv_d = np.linalg.solve(R, obs.d)
    Qinv = np.linalg.inv(Q)
    prec = _sym(Qinv + H.T @ Rinv_H)
    rhs = Qinv @ prior.mean + H.T @ Rinv_d
    return np.linalg.solve(prec, rhs), _sym(np.linalg.inv(prec))


def osi_smw_cov(prior: KfState, obs: ObservationModel) -> np.ndarray:
    """``Q - Q Hᵀ (R + H Q Hᵀ)^{-1} H Q``, the expanded Woodbury form of the posterior covariance."""
    Q, H = prior.cov, obs.H
    S = _sym(obs.R + H @ Q @ H.T)
    return _sym(Q - Q @ H.T @ np.linalg.solve(S, H @ Q))


def osi_analysis(prior: KfState, obs: ObservationModel, check: bool = True) -> KfState:
    """Kalman / OSI analysis: ``μᵃ = μ + K(d - Hμ)``, ``Qᵃ = (I - KH)Q`` symmetrized.

    With ``check`` and a well-conditioned invertible ``Q``, the mean is
    recomputed in precision form and must agree to relative 1e-8.
    """
    Q, H = prior.cov, obs.H
    if H.shape[1] != prior.mean.size:
        raise ShapeMismatch(f"H {H.shape} for state of size {prior.mean.size}")
    K = kalman_gain(Q, H, obs.R)
    mean = prior.mean + K @ (obs.d - H @ prior.mean)
    cov = _sym((np.eye(Q.shape[0]) - K @ H) @ Q)
    if check and np.linalg.cond(Q) < CHECK_MAX_COND:
        mean_p, _ = osi_precision_form(prior, obs)
        scale = max(np.linalg.norm(mean), np.linalg.norm(prior.mean), 1e-300)
        err = np.linalg.norm(mean - mean_p) / scale
        if err > CHECK_RTOL:
            raise ConsistencyError(f"gain/precision mean mismatch {err:.2e}")
    return KfState(mean, cov)


def kf_forecast(state: KfState, model: LinearModel) -> KfState:
    """``μ' = Aμ + f``, ``Q' = A Q Aᵀ + D``."""
    A = model.A
    return KfState(A @ state.mean + model.f, _sym(A @ state.cov @ A.T + model.D))


# EnKF --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbedData:
    """Columns ``D_k ~ N(d, R)``, shape ``(m_obs, N)``."""

    columns: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", np.atleast_2d(np.asarray(self.columns, dtype=float)))

    @property
    def N(self) -> int:
        return self.columns.shape[1]

    def head(self, N: int) -> "PerturbedData":
        """First ``N`` columns."""
        if N > self.N:
            raise ValueError(f"only {self.N} columns available")
        return PerturbedData(self.columns[:, :N], self.seed)


def perturbations_from_normals(obs: ObservationModel, xi) -> PerturbedData:
    """``D_k = d + L ξ_k`` with ``L Lᵀ = R`` for given standard normal columns ``ξ``."""
    L = np.linalg.cholesky(obs.R)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    return PerturbedData(obs.d[:, None] + L @ xi)


def make_perturbed_data(obs: ObservationModel, N: int, rng=None, seed: int | None = None) -> PerturbedData:
    """``N`` independent draws ``D_k ~ N(d, R)``.

    Draws fill member by member, so for a fixed seed the first ``k``
    columns never depend on ``N``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    g = as_generator(rng if rng is not None else seed)
    xi = g.standard_normal((N, obs.m_obs)).T
    out = perturbations_from_normals(obs, xi)
    return PerturbedData(out.columns, seed)


def _check_pair(X: np.ndarray, obs: ObservationModel, D: PerturbedData):
    if X.shape[1] < 2:
        raise DegenerateEnsemble("the analysis needs at least two members")
    if D.columns.shape != (obs.m_obs, X.shape[1]):
        raise ShapeMismatch(f"perturbed data {D.columns.shape}, expected {(obs.m_obs, X.shape[1])}")
    if obs.H.shape[1] != X.shape[0]:
        raise ShapeMismatch(f"H {obs.H.shape} for state of size {X.shape[0]}")


def enkf_smw_inverse(B: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``(R + B Bᵀ/(N-1))^{-1}`` by the Woodbury identity, factoring only R and an N x N system."""
    N = B.shape[1]
    R_cf = sla.cho_factor(R)
    return smw_solve(lambda b: sla.cho_solve(R_cf, b), B, (N - 1) * np.eye(N), B.T,
                     np.eye(R.shape[0]))


def enkf_transform_matrix(X, obs: ObservationModel, D: PerturbedData) -> np.ndarray:
    """``T`` with ``Xᵃ = X T``: ``I + (I - eeᵀ/N) Xᵀ Hᵀ (H Q_N Hᵀ + R)^{-1} (D - H X) / (N-1)``."""
    X = as_ensemble(X)
    _check_pair(X, obs, D)
    N = X.shape[1]
    H = obs.H
    Q_N = sample_cov(X, "N-1")
    S = _sym(H @ Q_N @ H.T + obs.R)
    inner = sla.cho_solve(sla.cho_factor(S), D.columns - H @ X)
    center = np.eye(N) - np.full((N, N), 1.0 / N)
    return np.eye(N) + center @ X.T @ H.T @ inner / (N - 1)


def enkf_analysis(X, obs: ObservationModel, D: PerturbedData, check: bool = True) -> np.ndarray:
    """EnKF analysis ``Xᵃ = X + K_N (D - H X)`` with ``K_N`` from the sample covariance.

    With ``check``, the inner inverse is recomputed by the Woodbury form and
    the update by the transform form ``X T``; both must agree to 1e-8.
    """
    X = as_ensemble(X)
    _check_pair(X, obs, D)
    H, R = obs.H, obs.R
    Q_N = sample_cov(X, "N-1")
    S = _sym(H @ Q_N @ H.T + R)
    try:
        S_cf = sla.cho_factor(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    innov = D.columns - H @ X
    Xa = X + Q_N @ H.T @ sla.cho_solve(S_cf, innov)
    if check:
        B = H @ X - (H @ X).mean(axis=1, keepdims=True)
        direct = sla.cho_solve(S_cf, np.eye(obs.m_obs))
        if np.linalg.cond(S) < CHECK_MAX_COND:
            err = _rel_err(enkf_smw_inverse(B, R), direct)
            if err > CHECK_RTOL:
                raise ConsistencyError(f"Woodbury inner inverse mismatch {err:.2e}")
        err = _rel_err(X @ enkf_transform_matrix(X, obs, D), Xa)
        if err > CHECK_RTOL:
            raise ConsistencyError(f"transform-form mismatch {err:.2e}")
    return Xa


def exact_gain_analysis(U, obs: ObservationModel, Q_exact, D: PerturbedData) -> np.ndarray:
    """``Uᵃ = U + K (D - H U)`` with the gain of the exact covariance ``Q_exact``."""
    U = as_ensemble(U)
    _check_pair(U, obs, D)
    K = kalman_gain(np.asarray(Q_exact, dtype=float), obs.H, obs.R)
    return U + K @ (D.columns - obs.H @ U)


# ETKF --------------------------------------------------------------------------

@dataclass(frozen=True)
class EtkfResult:
    ensemble: np.ndarray      # Xᵃ
    mean: np.ndarray          # X̄ᵃ
    A: np.ndarray             # forecast deviates
    B: np.ndarray             # observed deviates
    Qtilde: np.ndarray        # ((N-1) I + Bᵀ R⁻¹ B)⁻¹
    w: np.ndarray             # mean weights wᵃ
    W: np.ndarray             # symmetric root of (N-1) Q̃ᵃ
    T: np.ndarray = field(repr=False)  # Xᵃ = X T

    @property
    def analysis_cov(self) -> np.ndarray:
        """``A Q̃ᵃ Aᵀ``."""
        return _sym(self.A @ self.Qtilde @ self.A.T)


def symmetric_sqrt(S: np.ndarray) -> np.ndarray:
    """Unique symmetric PSD square root via eigendecomposition."""
    lam, V = np.linalg.eigh(_sym(S))
    return _sym((V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T)


def etkf(X, obs_fn: Callable, R, d) -> EtkfResult:
    """ETKF analysis with all intermediate quantities.

    ``obs_fn`` maps one state vector to an observation vector; nonlinear
    maps enter only through ``Ȳ`` and ``B`` (exact when ``obs_fn`` is affine).
    """
    X = as_ensemble(X)
    N = X.shape[1]
    if N < 2:
        raise DegenerateEnsemble("the ETKF needs at least two members")
    R = check_R(R)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    Y = np.column_stack([np.atleast_1d(obs_fn(X[:, i])) for i in range(N)])
    if Y.shape[0] != d.size or R.shape[0] != d.size:
        raise ShapeMismatch(f"observations {Y.shape[0]}, d {d.size}, R {R.shape}")
    xbar = X.mean(axis=1)
    ybar = Y.mean(axis=1)
    A = X - xbar[:, None]
    B = Y - ybar[:, None]
    R_cf = sla.cho_factor(R)
    Rinv_B = sla.cho_solve(R_cf, B)
    Qt_inv = _sym((N - 1) * np.eye(N) + B.T @ Rinv_B)
    Qt = _sym(np.linalg.inv(Qt_inv))
    w = Qt @ (Rinv_B.T @ (d - ybar))
    mean_a = xbar + A @ w
    W = symmetric_sqrt((N - 1) * Qt)
    Xa = mean_a[:, None] + A @ W
    center = np.eye(N) - np.full((N, N), 1.0 / N)
    T = np.full((N, N), 1.0 / N) + center @ (np.outer(w, np.ones(N)) + W)
    return EtkfResult(Xa, mean_a, A, B, Qt, w, W, T)


def etkf_analysis(X, obs_fn: Callable, R, d) -> np.ndarray:
    """ETKF analysis ensemble ``Xᵃ_i = X̄ᵃ + (A W)_i``."""
    return etkf(X, obs_fn, R, d).ensemble


def etkf_smw_inner(B, R, N: int, check: bool = True) -> np.ndarray:
    """``I - Bᵀ (R + B Bᵀ/(N-1))^{-1} B / (N-1)``, equal to ``(I + Bᵀ R⁻¹ B/(N-1))^{-1}``.

    With ``check`` the second form is computed too and must agree to 1e-8
    (skipped when it is too ill-conditioned to compare at that level).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    R = check_R(R)
    if B.shape != (R.shape[0], N):
        raise ShapeMismatch(f"B {B.shape}, R {R.shape}, N {N}")
    S = _sym(R + B @ B.T / (N - 1))
    out = _sym(np.eye(N) - B.T @ np.linalg.solve(S, B) / (N - 1))
    if check:
        M = _sym(np.eye(N) + B.T @ np.linalg.solve(R, B) / (N - 1))
        if np.linalg.cond(M) < CHECK_MAX_COND:
            err = _rel_err(out, np.linalg.inv(M))
            if err > CHECK_RTOL:
                raise ConsistencyError(f"ensemble-space Woodbury mismatch {err:.2e}")
    return out


def scalar_obs_exactness(X, h0: float, h1, w) -> tuple[float, float, float]:
    """Both sides of ``H(X̄ + A w) = Ȳ + B w`` for ``H(x) = h0 + h1ᵀ x``."""
    X = as_ensemble(X)
    h1 = np.asarray(h1, dtype=float)
    w = np.asarray(w, dtype=float)
    xbar = X.mean(axis=1)
    A = X - xbar[:, None]
    Y = h0 + h1 @ X
    lhs = float(h0 + h1 @ (xbar + A @ w))
    rhs = float(Y.mean() + (Y - Y.mean()) @ w)
    return lhs, rhs, abs(lhs - rhs)


# Particle reweighting ---------------------------------------------------------

@dataclass(frozen=True)
class ParticleSet:
    """Particles as columns ``(n_state, N)`` with normalized weights."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = as_ensemble(self.particles)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (x.shape[1],):
            raise ShapeMismatch("one weight per particle")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "particles", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, particles) -> "ParticleSet":
        x = as_ensemble(particles)
        return cls(x, np.full(x.shape[1], 1.0 / x.shape[1]))

    @property
    def ess(self) -> float:
        """Effective sample size ``1 / sum w²``."""
        return float(1.0 / np.sum(self.weights**2))

    def mean(self) -> np.ndarray:
        return self.particles @ self.weights


# log of the smallest positive double: below this every likelihood is 0.0
_LOG_UNDERFLOW = np.log(np.finfo(float).tiny * np.finfo(float).eps)


def log_likelihood(x: np.ndarray, obs: ObservationModel) -> np.ndarray:
    """``-½ (H x - d)ᵀ R⁻¹ (H x - d)`` for every column of ``x``."""
    r = obs.H @ x - obs.d[:, None]
    L = np.linalg.cholesky(obs.R)
    z = sla.solve_triangular(L, r, lower=True)
    return -0.5 * np.sum(z**2, axis=0)


def bayes_reweight(p: ParticleSet, obs: ObservationModel) -> ParticleSet:
    """Multiply weights by the Gaussian data likelihood and renormalize.

    Normalization runs in log space. :class:`AllWeightsZero` is raised when
    every weighted likelihood underflows double precision, the signature of
    a degenerate particle filter.
    """
    with np.errstate(divide="ignore"):
        logw = np.log(p.weights) + log_likelihood(p.particles, obs)
    top = logw.max()
    if not np.isfinite(top) or top < _LOG_UNDERFLOW:
        raise AllWeightsZero(f"largest log-weight {top:.1f} underflows")
    w = np.exp(logw - top)
    w /= w.sum()
    return ParticleSet(p.particles, w)


# Serialization -------------------------------------------------------------------

def write_ensemble_csv(X, path) -> None:
    """One member per row."""
    X = as_ensemble(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for member in X.T:
            w.writerow([repr(float(v)) for v in member])


def read_ensemble_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2).T


def write_cycle_log(rows, path) -> None:
    """Per-cycle log with columns ``cycle,rmse,trace_cov``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle", "rmse", "trace_cov"])
        for cycle, rmse, tr in rows:
            w.writerow([int(cycle), repr(float(rmse)), repr(float(tr))])
