"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``[criterion N] PASS|FAIL ...`` line to the
terminal (past pytest's capture) with the measured numbers.
"""

import math
import time

import numpy as np
import pytest

from hilbert_da.ensemble_stats import (cov_convergence_experiment, exchangeability_check,
                                       lln_experiment)
from hilbert_da.experiments import (char_fn_suite, curse_experiment,
                                    enkf_convergence_experiment, etkf_suite, osi_suite,
                                    paired_member_runs)
from hilbert_da.gaussian import GaussianSpec, white_noise_growth
from hilbert_da.rect_field import (GridField, InversePower, RectDomain, apply_covariance,
                                   continuous_eigenvalue, covariance_eigs, dense_kernel,
                                   discrete_eigenvalue, dst2_forward, dst2_inverse,
                                   sobolev_energy, trace_partial_sums)
from hilbert_da.rng import stream

SEED = 0
POW2_16_4096 = [2**k for k in range(4, 13)]


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str, elapsed: float | None = None,
             limit: float | None = None):
        timing = ""
        if elapsed is not None:
            timing = f" [{elapsed:.1f}s"
            if limit is not None:
                timing += f" / limit {limit:.0f}s"
                ok = ok and elapsed < limit
            timing += "]"
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {detail}{timing}")
        assert ok, detail
    return emit


def test_01_etkf_exactness(verdict):
    t = time.perf_counter()
    res = etkf_suite(trials=100, seed=SEED, max_state=20, max_members=40, tol=1e-10)
    elapsed = time.perf_counter() - t
    verdict(1, all(r.passed for r in res),
            "ETKF " + ", ".join(f"{r.name.split()[-1]}={r.value:.1e}" for r in res) + " (< 1e-10)",
            elapsed, 5)


def test_02_osi_cross_forms(verdict):
    t = time.perf_counter()
    res = osi_suite(trials=100, seed=SEED, max_dim=30, tol=1e-8)
    elapsed = time.perf_counter() - t
    verdict(2, all(r.passed for r in res),
            "OSI " + ", ".join(f"{r.name}={r.value:.1e}" for r in res) + " (< 1e-8)", elapsed, 5)


def test_03_l2_lln_rate_and_bound(verdict):
    t = time.perf_counter()
    parts, ok = [], True
    for dim in (1, 5, 20):
        rep = lln_experiment(GaussianSpec(np.zeros(dim), np.eye(dim)), POW2_16_4096,
                             replicates=100, p=2, seed=SEED)
        good = rep.slope_within(-0.5, 0.1) and rep.bound_holds(3.0)
        ok = ok and good
        parts.append(f"d={dim}: slope {rep.slope:.3f}, bound {'ok' if rep.bound_holds() else 'violated'}")
    verdict(3, ok, "L2 LLN " + "; ".join(parts), time.perf_counter() - t, 60)


def test_04_sample_covariance_hs_rate(verdict):
    t = time.perf_counter()
    parts, ok = [], True
    for dim in (1, 5, 20):
        rep = cov_convergence_experiment(GaussianSpec(np.zeros(dim), np.eye(dim)), POW2_16_4096,
                                         replicates=100, p=2, seed=SEED)
        dominates = rep.extra["hs_dominates_op"] and bool(np.all(rep.errors >= rep.extra["op_errors"]))
        good = rep.slope_within(-0.5, 0.1) and dominates
        ok = ok and good
        parts.append(f"d={dim}: slope {rep.slope:.3f}, HS>=op {dominates}")
    verdict(4, ok, "sample cov " + "; ".join(parts), time.perf_counter() - t, 60)


def test_05_enkf_to_exact_gain(verdict):
    t = time.perf_counter()
    reps = enkf_convergence_experiment([2**k for k in range(3, 11)], cycles=3, replicates=100,
                                       seed=SEED, dim=10)
    slopes = [r.slope for r in reps]
    ok = all(r.slope_within(-0.5, 0.15) for r in reps)
    verdict(5, ok, "EnKF vs exact gain slopes per cycle " + ", ".join(f"{s:.3f}" for s in slopes)
            + " (-0.5 +/- 0.15)", time.perf_counter() - t, 120)


def test_06_trace_and_sobolev_thresholds(verdict):
    t = time.perf_counter()
    dom = RectDomain(1.0, 1.0, 128, 128)
    K = 128 * 128
    bad = []
    for alpha in (0.5, 1.0, 1.5, 2.0, 3.0):
        law = InversePower(alpha)
        tr = trace_partial_sums(law, dom, K)
        if tr.converges != (alpha > 1) or not tr.consistent:
            bad.append(f"trace alpha={alpha}")
        for s in (0, 1, 2):
            sob = sobolev_energy(law, s, dom, K)
            if sob.converges != (alpha > 1 + s) or not sob.consistent:
                bad.append(f"sobolev alpha={alpha} s={s}")
    verdict(6, not bad, "15 verdicts and tail-bound checks at K=128^2"
            + (f"; mismatches: {bad}" if bad else " all match"), time.perf_counter() - t, 10)


def test_07_dst_correctness(verdict):
    g = stream(SEED, 7)
    worst_rt = 0.0
    for m, n in [(8, 8), (31, 17), (64, 64), (256, 256)]:
        dom = RectDomain(1.0, 2.0, m, n)
        f = GridField(dom, g.standard_normal(dom.shape))
        worst_rt = max(worst_rt, float(np.abs(dst2_inverse(dst2_forward(f), dom).values
                                              - f.values).max()))
    worst_k = 0.0
    for m, n in [(4, 4), (9, 7), (16, 16)]:
        dom = RectDomain(1.0, 1.5, m, n)
        cov = covariance_eigs(InversePower(1.5), dom)
        w = GridField(dom, g.standard_normal(dom.shape))
        dense = dom.cell_area * dense_kernel(cov, dom) @ w.values.ravel()
        fast = apply_covariance(cov, w).values.ravel()
        worst_k = max(worst_k, float(np.abs(fast - dense).max() / np.abs(dense).max()))
    fine = RectDomain(math.pi, math.pi, 511, 511)
    worst_e = max(abs(discrete_eigenvalue(k, l, fine) / continuous_eigenvalue(k, l, fine) - 1)
                  for k in range(1, 5) for l in range(1, 5))
    ok = worst_rt < 1e-12 and worst_k < 1e-10 and worst_e < 0.01
    verdict(7, ok, f"DST roundtrip {worst_rt:.1e} (< 1e-12), covariance vs dense {worst_k:.1e} "
            f"(< 1e-10), eigenvalue rel. gap {worst_e:.2e} (< 1e-2)")


def test_08_characteristic_functional(verdict):
    t = time.perf_counter()
    res = char_fn_suite(dims=(1, 2, 5), draws=100_000, n_h=20, h_max=3.0, seed=SEED)
    verdict(8, all(r.passed for r in res),
            "char-fn max |emp - exact| " + ", ".join(f"{r.name.split()[-1]}d={r.value:.1e}" for r in res)
            + f" (<= {5 / math.sqrt(100_000):.1e})", time.perf_counter() - t, 10)


def test_09_white_noise_growth(verdict):
    out = white_noise_growth([1, 100, 400], 10_000, stream(SEED, 9))
    rel = {d: abs(v / d - 1) for d, v in out}
    verdict(9, all(r <= 0.05 for r in rel.values()),
            "white noise E|X|^2/d - 1: " + ", ".join(f"d={d}: {r:.3f}" for d, r in rel.items())
            + " (<= 0.05)")


def test_10_curse_of_dimensionality(verdict):
    t = time.perf_counter()
    rep = curse_experiment(("const", "inv", "inv_sq"), (50, 100, 200, 400), N=10, m_obs=25,
                           replicates=50, seed=SEED)
    flat = rep.flat_within_noise("inv_sq")
    grows = rep.strictly_increasing("const")
    fmt = lambda law: "/".join(f"{r.rmse:.3f}" for r in rep.series(law))
    verdict(10, flat and grows and rep.N == 10 and rep.m_obs == 25,
            f"RMSE const {fmt('const')} (increasing: {grows}); inv_sq {fmt('inv_sq')} "
            f"(flat within 3 SE: {flat})", time.perf_counter() - t, 120)


def test_11_exchangeability(verdict):
    x, u = paired_member_runs(N=8, dim=5, replicates=200, seed=SEED)
    rep = exchangeability_check(x, u, threshold=3.0)
    verdict(11, rep.passed, f"member-index z-scores max |z| = {rep.max_abs_z:.2f} (<= 3) "
            f"over {sum(v.size for v in rep.z_scores.values())} statistics")
