"""The EnKF ensemble approaches the exact-gain ensemble as N grows.

Both filters start from the same members and use the same perturbed data,
taken from the front of fixed streams, so the only difference is the gain.
"""

from hilbert_da.experiments import enkf_convergence_experiment

reports = enkf_convergence_experiment(sizes=[8, 16, 32, 64, 128, 256, 512, 1024], cycles=3,
                                      replicates=100, seed=0)
for rep in reports:
    print(f"cycle {rep.extra['cycle']}: slope {rep.slope:.3f}")
    for N, e in zip(rep.sizes, rep.errors):
        print(f"   N={N:5d}  |X - U|_2 = {e:.4f}")
