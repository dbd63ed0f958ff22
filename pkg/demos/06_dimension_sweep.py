"""Filter error against state dimension for three prior eigenvalue laws.

Constant and 1/n eigenvalues have infinite trace in the limit; 1/n^2 does
not. Only in the last case does the error settle as the dimension grows.
"""

from hilbert_da.experiments import curse_experiment

rep = curse_experiment(laws=("const", "inv", "inv_sq"), dims=(50, 100, 200, 400), N=10,
                       m_obs=25, replicates=50, seed=0)
print(f"N={rep.N}, m={rep.m_obs}, obs std {rep.obs_std}")
for law in ("const", "inv", "inv_sq"):
    row = "  ".join(f"{r.dim}:{r.rmse:7.3f}" for r in rep.series(law))
    print(f"{law:7} {row}")
print("inv_sq flat within noise:", rep.flat_within_noise("inv_sq"))
print("const strictly increasing:", rep.strictly_increasing("const"))

# the particle analog: fraction of runs where every weight underflowed
for law in ("const", "inv", "inv_sq"):
    print(law, "underflow fraction by dim:", [r.pf_underflow for r in rep.series(law)])
