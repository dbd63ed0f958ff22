"""Random fields on a rectangle: when does a covariance law give a real field?"""

import numpy as np

from hilbert_da.rect_field import (EigenvalueSequence, HeatKernel, InversePower, RectDomain,
                                   covariance_eigs, dst2_forward, sample_field, sobolev_energy,
                                   trace_partial_sums)

dom = RectDomain(a=1.0, b=1.0, m=127, n=127)
g = np.random.default_rng(1)

# A covariance that is a negative power of the Laplacian. Each draw is a
# Karhunen-Loeve sum over the sine modes, done with one inverse DST.
cov = covariance_eigs(InversePower(2.0), dom)
field = sample_field(cov, dom, g)
print("one draw, grid L2 norm^2:", round(field.l2_norm_sq(), 4))

# the coefficients come back with variance lambda_kl
coeffs = np.array([dst2_forward(sample_field(cov, dom, g)) for _ in range(2000)])
print("var of (1,1) coefficient / lambda_11:", round(coeffs[:, 0, 0].var() / cov.eigenvalues[0, 0], 3))

# The expected squared norm is the trace. Whether it stays finite as the
# grid is refined decides whether the law is a probability measure at all.
for law in [InversePower(0.5), InversePower(1.0), InversePower(1.5), HeatKernel(0.01),
            EigenvalueSequence("const"), EigenvalueSequence("inv_sq")]:
    rep = trace_partial_sums(law, dom, 128 * 128)
    print(f"{law!s:45} trace {rep.verdict:9} partial sums {rep.partial_sums[-3]:.4g} "
          f"-> {rep.partial_sums[-1]:.4g}")

# smoothness: alpha > 1 + s puts the field in H^s
for s in (0, 1, 2):
    print(f"alpha=3, s={s}:", sobolev_energy(InversePower(3.0), s, dom, 128 * 128).verdict)
