"""Monte Carlo rates: sample means and sample covariances converge like n^(-1/2)."""

import numpy as np

from hilbert_da.ensemble_stats import (chebyshev_check, cov_convergence_experiment,
                                       lln_experiment)
from hilbert_da.gaussian import GaussianSpec, sample

sizes = [2**k for k in range(4, 13)]
src = GaussianSpec(np.zeros(5), np.eye(5))

rep = lln_experiment(src, sizes, replicates=100, p=2, seed=0)
print("sample mean, L2 error by n:")
for n, e, b in zip(rep.sizes, rep.errors, rep.bounds):
    print(f"  n={n:5d}  error {e:.4f}  bound 2|X|/sqrt(n) {b:.4f}")
print("fitted slope", round(rep.slope, 3))

# Hilbert-Schmidt error of the sample covariance, with the operator norm alongside
cov = cov_convergence_experiment(GaussianSpec(np.zeros(10), np.diag(1 / np.arange(1, 11.0) ** 2)),
                                 sizes, replicates=100, seed=0)
print("sample covariance HS slope", round(cov.slope, 3))
print("HS >= operator norm everywhere:", cov.extra["hs_dominates_op"])

# Chebyshev: Pr(|X| > t) <= (|X|_p / t)^p
x = sample(GaussianSpec([0.0], [[1.0]]), 200_000, seed=1)
for t in (1.0, 2.0, 3.0):
    c = chebyshev_check(x, t, 2)
    print(f"t={t}: Pr={c.empirical:.4f}  bound={c.bound:.4f}")
