"""Gaussian measures, characteristic functionals and white noise."""

import numpy as np

from hilbert_da.gaussian import (GaussianSpec, char_fn_check, sample, white_noise_growth,
                                 whiten)

spec = GaussianSpec(mean=[1.0, -0.5], cov=[[2.0, 0.6], [0.6, 1.0]])
batch = sample(spec, 100_000, seed=3)

# E exp(-i<h, X>) against exp(-i<a, h> - <Qh, h>/2)
for h in ([0.0, 0.0], [1.0, 0.0], [0.5, -2.0]):
    chk = char_fn_check(batch, np.array(h))
    print(f"h={h}: empirical {chk.empirical:.4f}  exact {chk.exact:.4f}  err {chk.abs_error:.1e}")

# Whitening by Q^{-1/2} gives identity covariance, as long as every
# retained eigenvalue is safely above zero.
centered = batch.draws - spec.mean
white = whiten(type(batch)(centered), spec.cov)
print("covariance after whitening:\n", np.round(np.cov(white.draws.T), 3))

# The same map applied to "white noise" in growing dimension: the mean
# squared norm equals the dimension, so no limit exists.
for d, msq in white_noise_growth([1, 10, 100, 1000], 2000, np.random.default_rng(4)):
    print(f"d={d:5d}  E|X|^2 ~ {msq:8.2f}")
