"""One analysis step, four ways: Kalman, EnKF, ETKF, and Bayes reweighting."""

import numpy as np

from hilbert_da.errors import AllWeightsZero
from hilbert_da.filters import (KfState, ObservationModel, ParticleSet, bayes_reweight,
                                enkf_analysis, etkf, make_perturbed_data, osi_analysis)

g = np.random.default_rng(5)
n = 6
idx = np.arange(n)
Q = np.exp(-np.abs(idx[:, None] - idx[None, :]) / 2.0)
prior = KfState(np.zeros(n), Q)
H = np.eye(n)[::2]
obs = ObservationModel(H, 0.25 * np.eye(3), d=np.array([1.0, 0.0, -1.0]))

post = osi_analysis(prior, obs)
print("Kalman mean   ", np.round(post.mean, 3))

N = 500
X = np.linalg.cholesky(Q) @ g.standard_normal((n, N))
Xa = enkf_analysis(X, obs, make_perturbed_data(obs, N, rng=g))
print("EnKF mean     ", np.round(Xa.mean(axis=1), 3))

# ETKF: deterministic transform of the deviations, no perturbed data
res = etkf(X, lambda x: H @ x, obs.R, obs.d)
print("ETKF mean     ", np.round(res.mean, 3))
print("ETKF sample cov equals A Q~ A^T:", np.allclose(np.cov(res.ensemble), res.analysis_cov))

# particle filter: reweight instead of moving the members
ps = bayes_reweight(ParticleSet.uniform(X), obs)
print("particle mean ", np.round(ps.mean(), 3), " ESS", round(ps.ess, 1), "of", N)

# with far-off data every likelihood underflows
try:
    bayes_reweight(ParticleSet.uniform(X), obs.with_data(np.full(3, 60.0)))
except AllWeightsZero as exc:
    print("far data:", exc)
