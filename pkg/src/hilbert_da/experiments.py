"""Monte Carlo drivers: EnKF convergence, the dimension sweep, and invariant suites.

Each driver takes a master seed and derives every random stream from it, so
a rerun with the same arguments reproduces the same numbers bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .ensemble_stats import ConvergenceReport, _check_sizes, _run_replicates, fit_slope, \
    lp_over_replicates
from .errors import AllWeightsZero
from .filters import (KfState, LinearModel, ObservationModel, ParticleSet, bayes_reweight,
                      enkf_analysis, etkf, exact_gain_analysis, kalman_gain, osi_analysis,
                      osi_precision_form, osi_smw_cov, perturbations_from_normals)
from .gaussian import GaussianSpec, char_fn_check, sample
from .rect_field import EigenvalueSequence
from .rng import INITIAL, OBS_NOISE, PERTURBED_DATA, TRUTH, replicate_seed, stream


@dataclass(frozen=True)
class Residual:
    """One line of an invariant suite: a measured residual against its tolerance."""

    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tol)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tol {self.tol:.0e})"


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _random_spd(g: np.random.Generator, n: int, floor: float = 0.1) -> np.ndarray:
    a = g.standard_normal((n, n))
    return a @ a.T / n + floor * np.eye(n)


# EnKF -> exact-gain filter ------------------------------------------------------

def default_linear_setup(dim: int = 10, m_obs: int | None = None, model: str = "default",
                         obs_std: float = 0.5 ** 0.5):
    """Initial covariance, linear model and observation operator for the convergence runs.

    ``Q0[i, j] = exp(-|i - j| / 3)``; the ``"default"`` model is
    ``0.9 I`` plus 0.05 on both off-diagonals, ``"identity"`` is ``I``.
    Every other coordinate is observed with noise variance ``obs_std²``.
    """
    idx = np.arange(dim)
    Q0 = np.exp(-np.abs(idx[:, None] - idx[None, :]) / 3.0)
    if model == "identity":
        A = np.eye(dim)
    elif model == "default":
        A = 0.9 * np.eye(dim) + 0.05 * (np.eye(dim, k=1) + np.eye(dim, k=-1))
    else:
        raise ValueError(f"unknown model {model!r}")
    rows = idx[::2] if m_obs is None else np.round(np.linspace(0, dim - 1, m_obs)).astype(int)
    H = np.eye(dim)[rows]
    R = obs_std**2 * np.eye(H.shape[0])
    return Q0, LinearModel(A), H, R


def _cycle_data(seed: int, cycle: int, m_obs: int) -> np.ndarray:
    # data are fixed per cycle and shared by all replicates
    return stream(seed, OBS_NOISE, cycle).standard_normal(m_obs)


def enkf_paired_run(Q0, model: LinearModel, H, R, N: int, cycles: int, seed: int, r: int,
                    Nmax: int | None = None):
    """EnKF ensemble X and exact-gain ensemble U after each of ``cycles`` analyses.

    Both start from the same i.i.d. members and consume the same perturbed
    data. Members are the first ``N`` of streams sized ``Nmax``, so runs
    with different ``N`` share their leading members. The first cycle
    analyzes the initial ensemble; later cycles forecast with ``model``
    first. Returns a list of ``(X, U)`` pairs, one per cycle.
    """
    Nmax = N if Nmax is None else Nmax
    dim = Q0.shape[0]
    rs = replicate_seed(seed, r)
    L0 = np.linalg.cholesky(Q0)
    X = L0 @ stream(rs, INITIAL).standard_normal((Nmax, dim))[:N].T
    U = X.copy()
    Q = Q0.copy()
    out = []
    for c in range(cycles):
        if c > 0:
            X, U = model.advance(X), model.advance(U)
            Q = model.A @ Q @ model.A.T
        obs = ObservationModel(H, R, _cycle_data(seed, c, H.shape[0]))
        xi = stream(rs, PERTURBED_DATA, c).standard_normal((Nmax, H.shape[0]))[:N].T
        D = perturbations_from_normals(obs, xi)
        X = enkf_analysis(X, obs, D, check=False)
        U = exact_gain_analysis(U, obs, Q, D)
        Q = osi_analysis(KfState(np.zeros(dim), Q), obs, check=False).cov
        out.append((X, U))
    return out


def enkf_convergence_experiment(sizes=(8, 16, 32, 64, 128, 256, 512, 1024), cycles: int = 3,
                                replicates: int = 100, seed: int = 0, dim: int = 10,
                                model: str = "default", workers: int = 1) -> list[ConvergenceReport]:
    """``||X_kᵃ - U_kᵃ||_2`` against ``N``, one report per cycle.

    The per-replicate error is the root mean square over members; by
    exchangeability every member has the same L² distance, so averaging
    over members only reduces noise.
    """
    if not 1 <= cycles <= 5:
        raise ValueError("cycles must be between 1 and 5")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    sizes = _check_sizes(sizes)
    if sizes[0] < 2:
        raise ValueError("ensembles need at least two members")
    Q0, model_, H, R = default_linear_setup(dim, model=model)
    nmax = int(sizes[-1])

    def one(r):
        errs = np.empty((cycles, sizes.size))
        for j, N in enumerate(sizes):
            for c, (X, U) in enumerate(enkf_paired_run(Q0, model_, H, R, int(N), cycles,
                                                       seed, r, nmax)):
                errs[c, j] = np.sqrt(np.mean(np.sum((X - U) ** 2, axis=0)))
        return errs

    errs = np.array(_run_replicates(one, replicates, workers))  # (R, cycles, sizes)
    reports = []
    for c in range(cycles):
        est, se = lp_over_replicates(errs[:, c, :], 2)
        reports.append(ConvergenceReport(
            sizes, est, se, np.full(sizes.shape, np.nan),
            slope=fit_slope(sizes, est),
            empirical_constant=float(np.max(est * np.sqrt(sizes))),
            extra={"cycle": c + 1, "replicates": replicates}))
    return reports


def paired_member_runs(N: int = 8, dim: int = 5, replicates: int = 200, seed: int = 0,
                       cycles: int = 1):
    """Replicated paired EnKF / exact-gain ensembles, shape ``(R, dim, N)`` each."""
    Q0, model, H, R = default_linear_setup(dim)
    xs, us = [], []
    for r in range(replicates):
        X, U = enkf_paired_run(Q0, model, H, R, N, cycles, seed, r)[-1]
        xs.append(X)
        us.append(U)
    return np.array(xs), np.array(us)


# Dimension sweep ------------------------------------------------------------------

@dataclass
class CurseRow:
    law: str
    dim: int
    rmse: float
    stderr: float
    pf_mean_ess: float
    pf_underflow: float


@dataclass
class CurseReport:
    """Filter RMSE against state dimension per eigenvalue law, with fixed N and m."""

    N: int
    m_obs: int
    obs_std: float
    replicates: int
    rows: list[CurseRow] = field(default_factory=list)

    def series(self, law: str) -> list[CurseRow]:
        return sorted((r for r in self.rows if r.law == law), key=lambda r: r.dim)

    def flat_within_noise(self, law: str, n_se: float = 3.0) -> bool:
        """No step rises by more than ``n_se`` standard errors of the difference."""
        s = self.series(law)
        return all(b.rmse - a.rmse <= n_se * np.hypot(a.stderr, b.stderr)
                   for a, b in zip(s, s[1:]))

    def strictly_increasing(self, law: str) -> bool:
        s = self.series(law)
        return len(s) > 1 and all(b.rmse > a.rmse for a, b in zip(s, s[1:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# N={self.N} m={self.m_obs} obs_std={self.obs_std!r} "
                     f"replicates={self.replicates}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["law", "dim", "rmse", "stderr", "pf_mean_ess", "pf_underflow"])
            for r in self.rows:
                w.writerow([r.law, r.dim, repr(r.rmse), repr(r.stderr),
                            repr(r.pf_mean_ess), repr(r.pf_underflow)])


def sine_point_operator(dim: int, m_obs: int) -> np.ndarray:
    """Point values at ``x_i = i / (m_obs + 1)`` of ``sum_j c_j sqrt(2) sin(j π x)``."""
    x = np.arange(1, m_obs + 1) / (m_obs + 1)
    return np.sqrt(2.0) * np.sin(np.pi * np.outer(x, np.arange(1, dim + 1)))


_LAW_TAGS = {"const": 0, "inv": 1, "inv_sq": 2}


def curse_experiment(laws=("const", "inv", "inv_sq"), dims=(50, 100, 200, 400), N: int = 10,
                     m_obs: int = 25, obs_std: float = 1.0, replicates: int = 50,
                     seed: int = 0) -> CurseReport:
    """EnKF analysis error against dimension for prior eigenvalue sequences.

    The state holds the first ``dim`` coefficients of a random function on
    (0, 1) in the sine basis, with prior variances from the law. A truth is
    drawn from the prior, the ``m_obs`` data are noisy point values at fixed
    evenly spaced locations, and the error is the L² distance between the
    analysis mean and the truth (Parseval: the coefficient distance). Each
    (law, dim, replicate) triple has its own streams. The same prior
    ensemble is also reweighted by the data likelihood to show the particle
    filter analog; its mean ESS and the fraction of replicates whose
    weights all underflow are reported.
    """
    dims = [int(d) for d in dims]
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be strictly increasing")
    rep = CurseReport(N, m_obs, float(obs_std), replicates)
    R = obs_std**2 * np.eye(m_obs)
    for law in laws:
        tag = _LAW_TAGS[law]
        for n in dims:
            sd = np.sqrt(EigenvalueSequence(law).values(n))
            H = sine_point_operator(n, m_obs)
            err2, ess, under = [], [], 0
            for r in range(replicates):
                rs = replicate_seed(seed, r)
                truth = sd * stream(rs, TRUTH, tag, n).standard_normal(n)
                d = H @ truth + obs_std * stream(rs, OBS_NOISE, tag, n).standard_normal(m_obs)
                obs = ObservationModel(H, R, d)
                X = sd[:, None] * stream(rs, INITIAL, tag, n).standard_normal((N, n)).T
                xi = stream(rs, PERTURBED_DATA, tag, n).standard_normal((N, m_obs)).T
                Xa = enkf_analysis(X, obs, perturbations_from_normals(obs, xi), check=False)
                err2.append(np.sum((Xa.mean(axis=1) - truth) ** 2))
                try:
                    ess.append(bayes_reweight(ParticleSet.uniform(X), obs).ess)
                except AllWeightsZero:
                    under += 1
            est, se = lp_over_replicates(np.sqrt(np.array(err2))[:, None], 2)
            rep.rows.append(CurseRow(law, n, float(est[0]), float(se[0]),
                                     float(np.mean(ess)) if ess else float("nan"),
                                     under / replicates))
    return rep


# Invariant suites ---------------------------------------------------------------------

def etkf_suite(trials: int = 100, seed: int = 0, max_state: int = 20, max_members: int = 40,
               tol: float = 1e-10, r_skew: float = 0.0) -> list[Residual]:
    """ETKF exactness on random ensembles: analysis mean, covariance, and ``Aᵃ e = 0``.

    ``r_skew`` is added to ``R[0, -1]`` only, to inject an asymmetric R.
    """
    g = stream(seed, 10)
    worst = {"mean": 0.0, "cov": 0.0, "Ae": 0.0}
    for _ in range(trials):
        n = int(g.integers(1, max_state + 1))
        N = int(g.integers(2, max_members + 1))
        m = int(g.integers(1, n + 1))
        X = g.standard_normal((n, N)) * g.uniform(0.5, 2.0, n)[:, None]
        H = g.standard_normal((m, n))
        Rt = _random_spd(g, m)
        Rt[0, -1] += r_skew
        d = g.standard_normal(m)
        res = etkf(X, lambda x, H=H: H @ x, Rt, d)
        Xa = res.ensemble
        worst["mean"] = max(worst["mean"], _rel(Xa.mean(axis=1), res.mean))
        worst["cov"] = max(worst["cov"], _rel(np.cov(Xa), res.analysis_cov))
        Aa = Xa - Xa.mean(axis=1, keepdims=True)
        scale = max(np.abs(X).max(), 1.0)
        worst["Ae"] = max(worst["Ae"], float(np.abs(Aa.sum(axis=1)).max() / (N * scale)))
    return [Residual(f"etkf {k}", v, tol) for k, v in worst.items()]


def osi_suite(trials: int = 100, seed: int = 0, max_dim: int = 30,
              tol: float = 1e-8) -> list[Residual]:
    """Gain form against precision form (mean) and ``(I - KH) Q`` against the Woodbury covariance."""
    g = stream(seed, 11)
    worst_mean = worst_cov = 0.0
    for _ in range(trials):
        n = int(g.integers(1, max_dim + 1))
        m = int(g.integers(1, n + 1))
        Q = _random_spd(g, n, floor=0.5)
        H = g.standard_normal((m, n))
        R = _random_spd(g, m, floor=0.5)
        prior = KfState(g.standard_normal(n), Q)
        obs = ObservationModel(H, R, g.standard_normal(m))
        K = kalman_gain(Q, H, R)
        gain_mean = prior.mean + K @ (obs.d - H @ prior.mean)
        gain_cov = (np.eye(n) - K @ H) @ Q
        prec_mean, _ = osi_precision_form(prior, obs)
        worst_mean = max(worst_mean, _rel(gain_mean, prec_mean))
        worst_cov = max(worst_cov, _rel(gain_cov, osi_smw_cov(prior, obs)))
    return [Residual("osi mean gain vs precision", worst_mean, tol),
            Residual("osi cov (I-KH)Q vs Woodbury", worst_cov, tol)]


def char_fn_suite(dims=(1, 2, 5), draws: int = 100_000, n_h: int = 20, h_max: float = 3.0,
                  seed: int = 0) -> list[Residual]:
    """Empirical characteristic functional of ``N(a, Q)`` against the exact value.

    Tolerance ``5 / sqrt(draws)``; the empirical value has standard deviation
    at most ``1 / sqrt(draws)``.
    """
    out = []
    for d in dims:
        g = stream(seed, 12, d)
        spec = GaussianSpec(g.standard_normal(d) * 0.5, _random_spd(g, d, floor=0.2))
        batch = sample(spec, draws, rng=stream(seed, INITIAL, d))
        worst = 0.0
        for _ in range(n_h):
            h = g.standard_normal(d)
            h *= g.uniform(0.0, h_max) / np.linalg.norm(h)
            worst = max(worst, char_fn_check(batch, h).abs_error)
        out.append(Residual(f"char-fn dim {d}", worst, 5.0 / np.sqrt(draws)))
    return out
