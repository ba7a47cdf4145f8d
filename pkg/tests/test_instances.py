import numpy as np
import pytest
from scipy.optimize import differential_evolution
from sklearn.base import clone

from hermitian_ma.instances import (
    LemmaCalibrator,
    LemmaSample,
    calibrate_strict_concavity,
    count_violations,
    lemma_ratio,
    random_metric,
    random_pd,
    random_unitary,
    sample_equation_eigenvalues,
    sample_lemma_instances,
)
from hermitian_ma.pointwise import cone_margin, pencil_eigenvalues, residual_point, subsolution_margin


def test_random_unitary_is_unitary():
    u = random_unitary(np.random.default_rng(0), 3, 50)
    eye = np.einsum("kij,kil->kjl", np.conj(u), u)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), eye.shape), atol=1e-13)


def test_random_pd_spectrum_and_metric():
    rng = np.random.default_rng(1)
    a = random_pd(rng, 3, 100, 0.5, 2.0)
    lam = np.linalg.eigvalsh(a)
    assert lam.min() >= 0.5 - 1e-12 and lam.max() <= 2.0 + 1e-12
    _, g = random_metric(rng, 3, 100)
    assert np.linalg.eigvalsh(g).min() > 0
    with pytest.raises(ValueError):
        random_pd(rng, 2, 1, 0.0, 1.0)


def test_sample_equation_eigenvalues_solve_the_equation():
    rng = np.random.default_rng(2)
    psi = rng.uniform(0.1, 1.0, 500)
    lam, ok = sample_equation_eigenvalues(rng, 3, 500, psi)
    assert ok.mean() > 0.5
    lam, psi = lam[ok], psi[ok]
    np.testing.assert_allclose(3 * np.prod(lam, axis=-1), psi * np.sum(lam, axis=-1), rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("extremal_fraction", [0.0, 0.5])
def test_lemma_sample_satisfies_hypotheses(n, extremal_fraction):
    eps, sup_psi = 0.5, 1.0
    sample = sample_lemma_instances(np.random.default_rng(3), n, 2000, eps, sup_psi, 10.0, extremal_fraction)
    assert len(sample) == 2000
    p_sub, p_sol = sample.points()
    assert np.max(np.abs(residual_point(p_sol))) <= 1e-10
    assert np.all(sample.w >= 10.0)
    assert np.all(sample.psi <= sup_psi) and np.all(sample.psi > 0)
    assert np.all(subsolution_margin(p_sub) >= -1e-12)
    assert np.all(cone_margin(p_sub) > 0)
    mu = pencil_eigenvalues(sample.g, sample.gsub)
    assert mu.min() >= eps * (1 - 1e-9) and mu.max() <= (1 + 1e-9) / eps


def test_sampling_is_deterministic_and_reports_unreachable_thresholds():
    a = sample_lemma_instances(np.random.default_rng(4), 2, 500, n_min=10.0)
    b = sample_lemma_instances(np.random.default_rng(4), 2, 500, n_min=10.0)
    np.testing.assert_array_equal(a.gtilde, b.gtilde)
    assert sample_lemma_instances(np.random.default_rng(4), 2, 100, n_min=1e4) is None
    with pytest.raises(ValueError):
        sample_lemma_instances(np.random.default_rng(4), 2, 10, epsilon=1.5)


def test_sample_take_and_concatenate():
    s = sample_lemma_instances(np.random.default_rng(5), 2, 100)
    both = LemmaSample.concatenate([s.take(slice(0, 40)), s.take(slice(40, 100))])
    np.testing.assert_array_equal(both.gsub, s.gsub)


def test_weak_inequality_on_samples():
    s = sample_lemma_instances(np.random.default_rng(6), 3, 5000, extremal_fraction=0.5)
    assert count_violations(s, 0.0) == 0
    assert np.min(lemma_ratio(s)) > 0


@pytest.mark.parametrize("n,expected", [(2, (0.06, 100.0)), (3, (0.07, 100.0))])
def test_calibration_frozen_values(n, expected):
    theta, n_thr, details = calibrate_strict_concavity(n, epsilon=0.5, sup_psi=1.0, seed=0)
    assert (theta, n_thr) == pytest.approx(expected)
    assert details[1000.0] is None


def _ratio_from_parameters(params, n, epsilon, sup_psi, n_min):
    """Ratio for diagonal aligned instances; a penalty outside the constraint set."""
    mu = epsilon ** (1 - 2 * params[:n])  # log-uniform coordinates in [ε, 1/ε]
    psi = sup_psi * params[n]
    lam_head = np.exp(params[n + 1:2 * n] * np.log(1e3 / 1e-2) + np.log(1e-2))
    if n * np.prod(mu) < psi * np.sum(mu) or psi <= 0:
        return 10.0
    # the last eigenvalue from n Πλ = ψ Σλ
    p, s = np.prod(lam_head), np.sum(lam_head)
    denom = n * p - psi
    if denom <= 0:
        return 10.0
    lam = np.append(lam_head, psi * s / denom)
    if lam[-1] > 1e3 or np.sum(lam) < n_min:
        return 10.0
    w = np.sum(lam)
    f = 1 / lam - 1 / w
    perm = np.argsort(params[2 * n:3 * n])
    return float(np.sum(f * (mu[perm] - lam)) / (1 + np.sum(f)))


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 3])
def test_calibrated_theta_below_optimised_infimum(n):
    theta, n_thr, _ = calibrate_strict_concavity(n, epsilon=0.5, sup_psi=1.0, seed=0)
    bounds = [(0, 1)] * (3 * n)
    res = differential_evolution(_ratio_from_parameters, bounds, args=(n, 0.5, 1.0, n_thr),
                                 seed=0, maxiter=300, tol=1e-10, polish=True)
    assert theta <= res.fun


def test_lemma_calibrator_estimator_api():
    est = LemmaCalibrator(n=2, pilot_size=2000, n_grid=(10.0,))
    params = est.get_params()
    assert params["pilot_size"] == 2000 and params["n_grid"] == (10.0,)
    assert clone(est).get_params() == params
    est.fit()
    assert est.theta_ > 0 and est.n_threshold_ == 10.0
    s = sample_lemma_instances(np.random.default_rng(7), 2, 1000, n_min=10.0)
    assert est.count_violations(s) == int(np.count_nonzero(~est.predict(s)))
    with pytest.raises(Exception):
        LemmaCalibrator().predict(s)
