import numpy as np
import pytest

from hilbert_da.errors import AllWeightsZero, DegenerateEnsemble, ShapeMismatch, SingularR
from hilbert_da.filters import (KfState, LinearModel, ObservationModel, ParticleSet,
                                PerturbedData, bayes_reweight, check_R, enkf_analysis,
                                enkf_smw_inverse, enkf_transform_matrix, etkf, etkf_analysis,
                                etkf_smw_inner, exact_gain_analysis, kalman_gain, kf_forecast,
                                make_perturbed_data, osi_analysis, osi_precision_form,
                                osi_smw_cov, read_ensemble_csv, scalar_obs_exactness,
                                symmetric_sqrt, write_cycle_log, write_ensemble_csv)


def spd(g, n, floor=0.5):
    a = g.standard_normal((n, n))
    return a @ a.T / n + floor * np.eye(n)


def test_check_R():
    with pytest.raises(SingularR):
        check_R([[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(SingularR):
        check_R(np.diag([1.0, 0.0]))
    with pytest.raises(SingularR):
        ObservationModel(np.eye(2), np.diag([1.0, -1.0]), np.zeros(2))


def test_observation_shapes():
    with pytest.raises(ShapeMismatch):
        ObservationModel(np.eye(2), np.eye(3), np.zeros(2))


# Kalman / OSI ----------------------------------------------------------------------

def test_osi_no_information():
    prior = KfState([1.0, -1.0], np.eye(2))
    post = osi_analysis(prior, ObservationModel(np.zeros((1, 2)), [[1.0]], [5.0]))
    np.testing.assert_allclose(post.mean, prior.mean)
    np.testing.assert_allclose(post.cov, prior.cov)


def test_osi_scalar_hand_computation():
    post = osi_analysis(KfState([0.0], [[1.0]]), ObservationModel([[1.0]], [[1.0]], [2.0]))
    assert post.mean[0] == pytest.approx(1.0)
    assert post.cov[0, 0] == pytest.approx(0.5)


def test_osi_uninformative_data():
    post = osi_analysis(KfState([0.3], [[1.0]]), ObservationModel([[1.0]], [[1e8]], [50.0]))
    assert post.mean[0] == pytest.approx(0.3, abs=1e-5)


def test_osi_forms_agree(rng):
    n, m = 6, 3
    prior = KfState(rng.standard_normal(n), spd(rng, n))
    obs = ObservationModel(rng.standard_normal((m, n)), spd(rng, m), rng.standard_normal(m))
    post = osi_analysis(prior, obs)
    mean_p, cov_p = osi_precision_form(prior, obs)
    np.testing.assert_allclose(post.mean, mean_p, rtol=1e-10)
    np.testing.assert_allclose(post.cov, cov_p, atol=1e-10)
    np.testing.assert_allclose(post.cov, osi_smw_cov(prior, obs), atol=1e-12)


def test_kalman_gain_formula(rng):
    Q, H, R = spd(rng, 4), rng.standard_normal((2, 4)), spd(rng, 2)
    np.testing.assert_allclose(kalman_gain(Q, H, R), Q @ H.T @ np.linalg.inv(H @ Q @ H.T + R),
                               rtol=1e-10)


def test_kf_forecast(rng):
    state = KfState(rng.standard_normal(4), spd(rng, 4))
    same = kf_forecast(state, LinearModel(np.eye(4)))
    np.testing.assert_array_equal(same.mean, state.mean)
    np.testing.assert_allclose(same.cov, state.cov)
    doubled = kf_forecast(KfState(np.zeros(2), np.eye(2)), LinearModel(2 * np.eye(2)))
    np.testing.assert_allclose(doubled.cov, 4 * np.eye(2))
    A, f, D = rng.standard_normal((4, 4)), rng.standard_normal(4), spd(rng, 4)
    out = kf_forecast(state, LinearModel(A, f, D))
    np.testing.assert_allclose(out.mean, A @ state.mean + f)
    np.testing.assert_allclose(out.cov, A @ state.cov @ A.T + D, atol=1e-12)


def test_linear_model_rejects_indefinite_noise():
    with pytest.raises(ValueError):
        LinearModel(np.eye(2), D=np.diag([1.0, -1.0]))


# perturbed data ------------------------------------------------------------------------

def test_perturbed_data_tiny_noise():
    obs = ObservationModel(np.eye(2), 1e-12 * np.eye(2) * 2, [1.0, -1.0])
    D = make_perturbed_data(obs, 5, seed=0)
    np.testing.assert_allclose(D.columns, np.tile([[1.0], [-1.0]], 5), atol=1e-4)


def test_perturbed_data_moments():
    R = np.array([[1.0, 0.3], [0.3, 0.5]])
    obs = ObservationModel(np.eye(2), R, [2.0, 0.0])
    D = make_perturbed_data(obs, 10_000, seed=1)
    np.testing.assert_allclose(D.columns.mean(axis=1), obs.d, atol=4 / np.sqrt(10_000))
    np.testing.assert_allclose(np.cov(D.columns), R, rtol=0.1, atol=0.02)


def test_perturbed_data_nested():
    obs = ObservationModel(np.eye(3), np.eye(3), np.zeros(3))
    small = make_perturbed_data(obs, 8, seed=4)
    big = make_perturbed_data(obs, 64, seed=4)
    np.testing.assert_array_equal(small.columns, big.head(8).columns)
    with pytest.raises(ValueError):
        small.head(9)


# EnKF -----------------------------------------------------------------------------------

def test_enkf_zero_operator_leaves_ensemble(rng):
    X = rng.standard_normal((3, 5))
    obs = ObservationModel(np.zeros((2, 3)), np.eye(2), np.zeros(2))
    np.testing.assert_allclose(enkf_analysis(X, obs, make_perturbed_data(obs, 5, seed=0)), X)


def test_enkf_scalar_hand_computation():
    X = np.array([[0.0, 2.0]])
    obs = ObservationModel([[1.0]], [[1.0]], [1.0])
    D = PerturbedData(np.array([[1.5, 0.5]]))
    Xa = enkf_analysis(X, obs, D)
    # Q_N = 2, K_N = 2/3
    assert Xa[0, 0] == pytest.approx(0.0 + 2 / 3 * 1.5)
    assert Xa[0, 1] == pytest.approx(2.0 + 2 / 3 * (0.5 - 2.0))


def test_enkf_matches_transform_and_woodbury(rng):
    n, m, N = 7, 4, 12
    X = rng.standard_normal((n, N))
    obs = ObservationModel(rng.standard_normal((m, n)), spd(rng, m), rng.standard_normal(m))
    D = make_perturbed_data(obs, N, seed=3)
    Xa = enkf_analysis(X, obs, D, check=True)
    np.testing.assert_allclose(X @ enkf_transform_matrix(X, obs, D), Xa, atol=1e-10)
    B = obs.H @ (X - X.mean(axis=1, keepdims=True))
    direct = np.linalg.inv(obs.R + B @ B.T / (N - 1))
    np.testing.assert_allclose(enkf_smw_inverse(B, obs.R), direct, atol=1e-10)


def test_enkf_needs_two_members():
    obs = ObservationModel(np.eye(1), np.eye(1), [0.0])
    with pytest.raises(DegenerateEnsemble):
        enkf_analysis(np.ones((1, 1)), obs, PerturbedData(np.zeros((1, 1))))
    with pytest.raises(ShapeMismatch):
        enkf_analysis(np.ones((1, 3)), obs, PerturbedData(np.zeros((1, 2))))


def test_exact_gain_zero_covariance(rng):
    U = rng.standard_normal((3, 4))
    obs = ObservationModel(np.eye(3), np.eye(3), np.ones(3))
    np.testing.assert_allclose(exact_gain_analysis(U, obs, np.zeros((3, 3)),
                                                   make_perturbed_data(obs, 4, seed=0)), U)


def test_exact_gain_monte_carlo_matches_osi():
    g = np.random.default_rng(21)
    n, N = 3, 10_000
    Q, mu = spd(g, n), g.standard_normal(n)
    obs = ObservationModel(g.standard_normal((2, n)), spd(g, 2), g.standard_normal(2))
    U = mu[:, None] + np.linalg.cholesky(Q) @ g.standard_normal((n, N))
    Ua = exact_gain_analysis(U, obs, Q, make_perturbed_data(obs, N, rng=g))
    post = osi_analysis(KfState(mu, Q), obs)
    scale = np.sqrt(np.diag(post.cov))
    np.testing.assert_allclose(Ua.mean(axis=1), post.mean, atol=5 * scale.max() / np.sqrt(N))
    np.testing.assert_allclose(np.cov(Ua), post.cov, rtol=0.05, atol=0.05 * post.cov.max())


def test_exact_and_enkf_agree_when_covariances_agree(rng):
    X = rng.standard_normal((3, 6))
    obs = ObservationModel(rng.standard_normal((2, 3)), spd(rng, 2), rng.standard_normal(2))
    D = make_perturbed_data(obs, 6, seed=2)
    np.testing.assert_allclose(enkf_analysis(X, obs, D),
                               exact_gain_analysis(X, obs, np.cov(X), D), atol=1e-12)


# ETKF ------------------------------------------------------------------------------------

def test_etkf_zero_innovation(rng):
    X = rng.standard_normal((4, 6))
    H = rng.standard_normal((2, 4))
    res = etkf(X, lambda x: H @ x, np.eye(2), H @ X.mean(axis=1))
    np.testing.assert_allclose(res.w, 0.0, atol=1e-13)
    np.testing.assert_allclose(res.mean, X.mean(axis=1), atol=1e-13)


def test_etkf_uninformative(rng):
    X = rng.standard_normal((3, 5))
    res = etkf(X, lambda x: x[:2], 1e8 * np.eye(2), np.zeros(2))
    np.testing.assert_allclose(res.Qtilde, np.eye(5) / 4, atol=1e-7)
    np.testing.assert_allclose(res.W, np.eye(5), atol=1e-6)
    np.testing.assert_allclose(res.ensemble, X, atol=1e-6)


def test_etkf_mean_matches_osi_with_sample_covariance(rng):
    n, N = 4, 9
    X = rng.standard_normal((n, N))
    H = rng.standard_normal((2, n))
    R = spd(rng, 2)
    d = rng.standard_normal(2)
    res = etkf(X, lambda x: H @ x, R, d)
    P = np.cov(X)
    post = osi_analysis(KfState(X.mean(axis=1), P), ObservationModel(H, R, d))
    np.testing.assert_allclose(res.mean, post.mean, rtol=1e-8)
    np.testing.assert_allclose(res.analysis_cov, post.cov, atol=1e-10)
    np.testing.assert_allclose(np.cov(res.ensemble), res.analysis_cov, atol=1e-10)
    np.testing.assert_allclose(X @ res.T, res.ensemble, atol=1e-10)
    np.testing.assert_allclose(etkf_analysis(X, lambda x: H @ x, R, d), res.ensemble)


def test_etkf_checks():
    with pytest.raises(DegenerateEnsemble):
        etkf(np.ones((2, 1)), lambda x: x, np.eye(2), np.zeros(2))
    with pytest.raises(SingularR):
        etkf(np.eye(2), lambda x: x, [[1.0, 1.0], [0.0, 1.0]], np.zeros(2))
    with pytest.raises(ShapeMismatch):
        etkf(np.eye(2), lambda x: x, np.eye(3), np.zeros(3))


def test_symmetric_sqrt(rng):
    S = spd(rng, 5)
    r = symmetric_sqrt(S)
    np.testing.assert_allclose(r, r.T)
    np.testing.assert_allclose(r @ r, S, atol=1e-12)


def test_etkf_smw_inner(rng):
    N = 5
    assert np.allclose(etkf_smw_inner(np.zeros((2, N)), np.eye(2), N), np.eye(N))
    B = rng.standard_normal((3, N))
    R = spd(rng, 3)
    two = np.linalg.inv(np.eye(N) + B.T @ np.linalg.solve(R, B) / (N - 1))
    np.testing.assert_allclose(etkf_smw_inner(B, R, N), two, atol=1e-10)
    # R -> 0 projects onto the null space of B
    proj = np.eye(N) - B.T @ np.linalg.solve(B @ B.T, B)
    np.testing.assert_allclose(etkf_smw_inner(B, 1e-8 * np.eye(3), N), proj, atol=1e-6)


def test_scalar_obs_exactness(rng):
    X = rng.standard_normal((4, 6))
    h1 = rng.standard_normal(4)
    ybar = (0.5 + h1 @ X).mean()
    lhs, rhs, diff = scalar_obs_exactness(X, 0.5, h1, np.zeros(6))
    assert lhs == pytest.approx(ybar) and rhs == pytest.approx(ybar)
    lhs, rhs, _ = scalar_obs_exactness(X, 0.5, np.zeros(4), rng.standard_normal(6))
    assert lhs == pytest.approx(0.5) and rhs == pytest.approx(0.5)
    assert scalar_obs_exactness(X, 0.5, h1, rng.standard_normal(6))[2] < 1e-12


# particle reweighting -----------------------------------------------------------------------

def test_reweight_equal_particles_stay_uniform():
    p = ParticleSet.uniform(np.ones((2, 4)))
    out = bayes_reweight(p, ObservationModel(np.eye(2), np.eye(2), [3.0, 0.0]))
    np.testing.assert_allclose(out.weights, 0.25)
    assert out.ess == pytest.approx(4.0)


def test_reweight_two_particles_ratio():
    d = np.array([1.0, 2.0])
    x2 = np.array([0.0, 0.5])
    R = np.diag([2.0, 0.5])
    out = bayes_reweight(ParticleSet.uniform(np.column_stack([d, x2])),
                         ObservationModel(np.eye(2), R, d))
    r = x2 - d
    assert out.weights[0] / out.weights[1] == pytest.approx(np.exp(0.5 * r @ np.linalg.solve(R, r)))


def test_reweight_far_data_underflows():
    p = ParticleSet.uniform(np.zeros((1, 3)))
    with pytest.raises(AllWeightsZero):
        bayes_reweight(p, ObservationModel(np.eye(1), [[1.0]], [100.0]))


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((1, 2)), np.array([0.7, 0.7]))
    with pytest.raises(ShapeMismatch):
        ParticleSet(np.zeros((1, 2)), np.array([1.0]))
    p = ParticleSet(np.array([[0.0, 4.0]]), np.array([0.25, 0.75]))
    assert p.mean()[0] == pytest.approx(3.0)
    assert p.ess == pytest.approx(1 / (0.25**2 + 0.75**2))


# serialization ------------------------------------------------------------------------------

def test_ensemble_csv_roundtrip(tmp_path, rng):
    X = rng.standard_normal((3, 4))
    write_ensemble_csv(X, tmp_path / "e.csv")
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 4
    np.testing.assert_array_equal(read_ensemble_csv(tmp_path / "e.csv"), X)


def test_cycle_log(tmp_path):
    write_cycle_log([(1, 0.5, 2.0), (2, 0.25, 1.0)], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == \
        ["cycle,rmse,trace_cov", "1,0.5,2.0", "2,0.25,1.0"]


def test_etkf_members_in_affine_span_of_forecast(rng):
    n, N = 12, 5
    X = rng.standard_normal((n, N))
    H = rng.standard_normal((3, n))
    res = etkf(X, lambda x: H @ x, spd(rng, 3), rng.standard_normal(3))
    # x = X c with sum(c) = 1: solve the augmented least-squares system
    M = np.vstack([X, np.ones((1, N))])
    for xa in res.ensemble.T:
        c, *_ = np.linalg.lstsq(M, np.append(xa, 1.0), rcond=None)
        assert np.linalg.norm(M @ c - np.append(xa, 1.0)) < 1e-8


def test_reweight_normalization(rng):
    X = rng.standard_normal((3, 50))
    out = bayes_reweight(ParticleSet.uniform(X), ObservationModel(np.eye(3), np.eye(3), np.ones(3)))
    assert abs(out.weights.sum() - 1) < 1e-12
    assert np.all(out.weights >= 0)
