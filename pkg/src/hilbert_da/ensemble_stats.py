"""Sample moments of ensembles and Monte Carlo laws of large numbers.

An ensemble is a 2-D array whose columns are the members,
``X = [X_1, ..., X_N]`` with shape ``(n_state, N)``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEnsemble, ShapeMismatch
from .gaussian import GaussianSpec, SampleBatch, moment_estimate
from .rng import INITIAL, replicate_seed, stream
from .spectral_ops import op_norm

DIVISORS = ("N", "N-1")


def as_ensemble(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeMismatch(f"ensemble must be (n_state, N) with N >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("ensemble has non-finite entries")
    return x


def sample_mean(x) -> np.ndarray:
    """``(1/N) sum_k X_k``."""
    return as_ensemble(x).mean(axis=1)


def sample_cov(x, divisor: str) -> np.ndarray:
    """``sum_k (X_k - X̄)(X_k - X̄)ᵀ / divisor`` with ``divisor`` ``"N"`` or ``"N-1"``."""
    x = as_ensemble(x)
    N = x.shape[1]
    if divisor not in DIVISORS:
        raise ValueError(f"divisor must be one of {DIVISORS}")
    den = N if divisor == "N" else N - 1
    if den < 1:
        raise DegenerateEnsemble("divisor N-1 needs at least two members")
    a = x - x.mean(axis=1, keepdims=True)
    c = (a @ a.T) / den
    return 0.5 * (c + c.T)


def sample_cov_tensor_form(x) -> np.ndarray:
    """``E_N(X ⊗ X) - X̄ ⊗ X̄``, the divisor-N covariance written with tensor products."""
    x = as_ensemble(x)
    xbar = x.mean(axis=1)
    return (x @ x.T) / x.shape[1] - np.outer(xbar, xbar)


def mean_sq_norm(x) -> float:
    """``E_N |X_k|²``."""
    x = as_ensemble(x)
    return float(np.mean(np.sum(x**2, axis=0)))


def cov_continuity_bound(x, y) -> float:
    """Right side of ``|C_N(X) - C_N(Y)| <= 2 E_N(|X-Y|²)^{1/2} (E_N(|X|²)^{1/2} + E_N(|Y|²)^{1/2})``."""
    x, y = as_ensemble(x), as_ensemble(y)
    return 2 * np.sqrt(mean_sq_norm(x - y)) * (np.sqrt(mean_sq_norm(x)) + np.sqrt(mean_sq_norm(y)))


# Convergence experiments -------------------------------------------------------

@dataclass
class ConvergenceReport:
    sizes: np.ndarray
    errors: np.ndarray
    stderr: np.ndarray
    bounds: np.ndarray
    slope: float
    empirical_constant: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=int)
        self.errors = np.asarray(self.errors, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        self.bounds = np.asarray(self.bounds, dtype=float)
        if np.any(np.diff(self.sizes) <= 0):
            raise ValueError("sizes must be strictly increasing")
        if np.any(self.errors < 0):
            raise ValueError("errors must be nonnegative")

    def bound_holds(self, n_se: float = 3.0) -> bool:
        """``error <= bound + n_se * stderr`` wherever a bound is defined."""
        ok = np.isnan(self.bounds) | (self.errors <= self.bounds + n_se * self.stderr)
        return bool(np.all(ok))

    def slope_within(self, target: float = -0.5, tol: float = 0.1) -> bool:
        return bool(np.isfinite(self.slope) and abs(self.slope - target) <= tol)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "error", "bound"])
            for n, e, b in zip(self.sizes, self.errors, self.bounds):
                w.writerow([int(n), repr(float(e)), "" if np.isnan(b) else repr(float(b))])
            w.writerow(["# slope", repr(float(self.slope)),
                        f"constant={float(self.empirical_constant)!r}"])


def fit_slope(sizes, errors, drop_first: bool = True) -> float:
    """Least-squares slope of log(error) against log(size).

    The smallest size is dropped; its transient constants bias the fit.
    """
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if drop_first:
        sizes, errors = sizes[1:], errors[1:]
    if sizes.size < 2 or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])


def lp_over_replicates(samples: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """``(mean_r e_r^p)^{1/p}`` along axis 0 and its delta-method standard error."""
    powered = samples**p
    m = powered.mean(axis=0)
    R = samples.shape[0]
    se_m = powered.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.full(m.shape, np.inf)
    est = m ** (1.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(m > 0, se_m * m ** (1.0 / p - 1.0) / p, 0.0)
    return est, se


def _draws(source: GaussianSpec, seed: int, r: int, count: int) -> np.ndarray:
    """Replicate ``r``'s i.i.d. draws from ``source`` as ensemble columns."""
    lam, vecs = source.eig()
    g = stream(replicate_seed(seed, r), INITIAL)
    xi = g.standard_normal((count, source.dim))
    return (source.mean + (xi * np.sqrt(lam)) @ vecs.T).T


def _run_replicates(fn, replicates: int, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(replicates)))
    return [fn(r) for r in range(replicates)]


def _check_sizes(sizes) -> np.ndarray:
    sizes = np.asarray(sorted(sizes), dtype=int)
    if sizes.size == 0 or sizes[0] < 1 or np.any(np.diff(sizes) <= 0):
        raise ValueError("sizes must be distinct positive counts")
    return sizes


def lln_experiment(source: GaussianSpec, sizes, replicates: int = 100, p: float = 2,
                   seed: int = 0, workers: int = 1) -> ConvergenceReport:
    """L^p error of the sample mean, ``||E_n(X_k) - E(X_1)||_p``, against ``n``.

    Each replicate draws one nested sequence, so the sizes share members.
    For ``p = 2`` the bound column holds ``2 ||X_1||_2 / sqrt(n)``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    sizes = _check_sizes(sizes)
    nmax = int(sizes[-1])

    def one(r):
        x = _draws(source, seed, r, nmax)
        prefix = np.cumsum(x, axis=1)[:, sizes - 1] / sizes
        return np.linalg.norm(prefix - source.mean[:, None], axis=0)

    errs = np.array(_run_replicates(one, replicates, workers))
    est, se = lp_over_replicates(errs, p)
    if p == 2:
        bounds = 2 * np.sqrt(source.second_moment()) / np.sqrt(sizes)
    else:
        bounds = np.full(sizes.shape, np.nan)
    return ConvergenceReport(
        sizes, est, se, bounds,
        slope=fit_slope(sizes, est),
        empirical_constant=float(np.max(est * np.sqrt(sizes))),
        extra={"p": p, "replicates": replicates,
               "centered_l2_norm": float(np.sqrt(source.trace))},
    )


def cov_convergence_experiment(source: GaussianSpec, sizes, replicates: int = 100,
                               p: float = 2, seed: int = 0,
                               workers: int = 1) -> ConvergenceReport:
    """L^p error of the divisor-N sample covariance in the Hilbert-Schmidt norm.

    Operator-norm errors of the same draws go to ``extra["op_errors"]``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    sizes = _check_sizes(sizes)
    nmax = int(sizes[-1])
    q = source.dense_cov()

    def one(r):
        x = _draws(source, seed, r, nmax)
        hs, op = [], []
        for n in sizes:
            diff = sample_cov(x[:, :n], "N") - q
            hs.append(np.linalg.norm(diff))
            op.append(op_norm(diff))
        return hs, op

    out = _run_replicates(one, replicates, workers)
    hs = np.array([o[0] for o in out])
    op = np.array([o[1] for o in out])
    est, se = lp_over_replicates(hs, p)
    op_est, _ = lp_over_replicates(op, p)
    return ConvergenceReport(
        sizes, est, se, np.full(sizes.shape, np.nan),
        slope=fit_slope(sizes, est),
        empirical_constant=float(np.max(est * np.sqrt(sizes))),
        extra={"p": p, "replicates": replicates, "op_errors": op_est,
               "hs_dominates_op": bool(np.all(hs >= op - 1e-12))},
    )


# Inequality and exchangeability checks ---------------------------------------

@dataclass(frozen=True)
class ChebyshevCheck:
    empirical: float
    bound: float
    margin: float

    @property
    def holds(self) -> bool:
        return self.empirical <= self.bound + self.margin


def chebyshev_check(batch: SampleBatch | np.ndarray, theta: float, p: float) -> ChebyshevCheck:
    """``Pr(|X| > theta)`` against ``(||X||_p / theta)^p``.

    The margin ``3 sqrt(bound / M)`` absorbs Monte Carlo noise in the
    empirical frequency.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    x = batch.draws if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    M = x.shape[0]
    emp = float(np.mean(np.linalg.norm(x, axis=1) > theta))
    bound = float((moment_estimate(x, p) / theta) ** p)
    return ChebyshevCheck(emp, bound, 3 * np.sqrt(bound / M))


@dataclass(frozen=True)
class ExchangeabilityReport:
    z_scores: dict
    max_abs_z: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= self.threshold


def exchangeability_check(x_runs, u_runs=None, threshold: float = 3.0) -> ExchangeabilityReport:
    """Test that per-member marginal moments do not depend on the member index.

    ``x_runs`` and ``u_runs`` have shape ``(R, n_state, N)``: ``R`` independent
    replicates of the paired ensembles. For each of ``X_k``, ``U_k`` and
    ``X_k - U_k`` two scalar statistics are formed per replicate (coordinate
    mean, and mean squared deviation from the pooled mean). Member ``k`` is
    compared against the average of the others through the replicate-wise
    difference, whose standard error accounts for the dependence between
    members of one ensemble.
    """
    x_runs = np.asarray(x_runs, dtype=float)
    if x_runs.ndim != 3 or x_runs.shape[2] < 2:
        raise ShapeMismatch("expected (R, n_state, N) with N >= 2")
    groups = {"X": x_runs}
    if u_runs is not None:
        u_runs = np.asarray(u_runs, dtype=float)
        if u_runs.shape != x_runs.shape:
            raise ShapeMismatch("paired runs must share a shape")
        groups["U"] = u_runs
        groups["X-U"] = x_runs - u_runs
    R, _, N = x_runs.shape
    if R < 2:
        raise ValueError("need at least two replicates")
    z_scores = {}
    for name, z in groups.items():
        pooled = z.mean(axis=(0, 2))
        stats = {
            "mean": z.mean(axis=1),
            "var": np.mean((z - pooled[None, :, None]) ** 2, axis=1),
        }
        for sname, s in stats.items():  # s: (R, N)
            others = (s.sum(axis=1, keepdims=True) - s) / (N - 1)
            d = s - others
            sd = d.std(axis=0, ddof=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                zk = np.where(sd > 0, d.mean(axis=0) / (sd / np.sqrt(R)), 0.0)
            z_scores[(name, sname)] = zk
    max_z = float(max(np.max(np.abs(v)) for v in z_scores.values()))
    return ExchangeabilityReport(z_scores, max_z, threshold)
