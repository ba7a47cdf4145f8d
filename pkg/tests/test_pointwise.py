from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermitian_ma.instances import random_metric, random_pd
from hermitian_ma.pointwise import (
    NotAdmissibleError,
    PointData,
    admissibility_margin,
    assemble_gtilde,
    concavity_probe,
    cone_margin,
    contract,
    equation_psi,
    is_admissible,
    strict_concavity_margin,
    strict_concavity_terms,
    linearization_coeffs,
    residual_point,
    subsolution_margin,
)

I2 = np.eye(2)
Z2 = np.zeros((2, 2))


def _random_hermitian(rng, n, size, scale=1.0):
    a = rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))
    return scale * 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def _diag_point(lam, psi=1.0, g=None):
    n = len(lam)
    return PointData(np.eye(n) if g is None else g, np.zeros((n, n)), np.diag(lam), psi)


@pytest.mark.parametrize("chi,hess,expected", [
    (I2, Z2, I2),
    (Z2, I2, I2),
    (I2, np.diag([-2.0, 0.0]), np.diag([-1.0, 1.0])),
])
def test_assemble_gtilde(chi, hess, expected):
    np.testing.assert_array_equal(assemble_gtilde(chi, hess), expected)


def test_assemble_gtilde_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        assemble_gtilde(I2, np.eye(3))


@pytest.mark.parametrize("g,gt,expected", [(I2, I2, 1.0), (I2, np.diag([-1.0, 1.0]), -1.0), (2 * I2, I2, 0.5)])
def test_admissibility_margin(g, gt, expected):
    p = PointData(g, Z2, gt)
    assert admissibility_margin(p) == pytest.approx(expected)
    assert is_admissible(p) == (expected > 0)


def test_residual_examples():
    assert residual_point(PointData(I2, I2, Z2, 1.0)) == pytest.approx(0.0, abs=1e-15)
    assert residual_point(PointData(I2, Z2, np.diag([2.0, 1.0]), 1.0)) == pytest.approx(np.log(4 / 3), abs=1e-15)
    assert residual_point(PointData(np.eye(3), np.eye(3), np.zeros((3, 3)), 1.0)) == pytest.approx(0.0, abs=1e-15)


def test_residual_rejects_inadmissible_and_nonpositive_psi():
    with pytest.raises(NotAdmissibleError):
        residual_point(PointData(I2, I2, np.diag([-2.0, 0.0])))
    with pytest.raises(ValueError, match="psi"):
        residual_point(PointData(I2, I2, Z2, 0.0))


def test_pointdata_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PointData(np.diag([1.0, -1.0]), Z2, Z2)
    with pytest.raises(ValueError):
        PointData(I2, np.array([[0.0, 1.0], [0.0, 0.0]]), Z2)
    with pytest.raises(ValueError):
        PointData(I2, Z2, np.zeros((3, 3)))


def test_linearization_examples():
    np.testing.assert_allclose(linearization_coeffs(PointData(I2, I2, Z2)), I2 / 2, atol=1e-15)
    lam = np.array([100.0, 100.0 / 199.0])
    w = lam.sum()
    f = linearization_coeffs(_diag_point(lam))
    np.testing.assert_allclose(f, np.diag(1.0 / lam - 1.0 / w), atol=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_linearization_matches_finite_differences(n):
    rng = np.random.default_rng(n)
    _, g = random_metric(rng, n, 20)
    chi = random_pd(rng, n, 20, 0.5, 5.0)
    hess = 0.1 * random_pd(rng, n, 20, 0.5, 5.0)
    delta = _random_hermitian(rng, n, 20)
    p = PointData(g, chi, hess, 1.3)
    f = linearization_coeffs(p)
    tau = 1e-6
    plus = residual_point(PointData(g, chi, hess + tau * delta, 1.3))
    minus = residual_point(PointData(g, chi, hess - tau * delta, 1.3))
    np.testing.assert_allclose(contract(f, delta), (plus - minus) / (2 * tau), atol=1e-6)


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
@settings(max_examples=50, deadline=None)
def test_linearization_is_positive_definite(seed, n):
    rng = np.random.default_rng(seed)
    _, g = random_metric(rng, n, 1)
    a = random_pd(rng, n, 1, 1e-2, 1e2)
    f = linearization_coeffs(PointData(g, np.zeros_like(a), a))
    assert np.min(np.linalg.eigvalsh(f)) > 0


def test_equation_psi_examples():
    assert equation_psi(I2, Z2, I2) == pytest.approx(1.0)
    assert equation_psi(I2, Z2, np.diag([2.0, 1.0])) == pytest.approx(4 / 3)
    with pytest.raises(NotAdmissibleError):
        equation_psi(I2, I2, np.diag([-2.0, 0.0]))


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
@settings(max_examples=50, deadline=None)
def test_equation_psi_closes_residual(seed, n):
    rng = np.random.default_rng(seed)
    _, g = random_metric(rng, n, 1)
    chi = random_pd(rng, n, 1, 0.1, 10.0)
    hess = _random_hermitian(rng, n, 1, 0.02)
    psi = equation_psi(g, chi, hess)
    assert abs(residual_point(PointData(g, chi, hess, psi))[0]) <= 1e-13
    # W = (n/ψ) det(g^{-1}𝔤) at a solution
    p = PointData(g, chi, hess, psi)
    lam = np.linalg.eigvals(np.linalg.solve(g[0], p.gtilde[0])).real
    assert p.w[0] == pytest.approx(n / psi[0] * np.prod(lam), rel=1e-12)


@pytest.mark.parametrize("lam,psi,expected", [((1.0, 1.0), 1.0, 0.0), ((2.0, 2.0), 1.0, 2.0), ((1.0, 1.0), 3.0, -2.0)])
def test_subsolution_margin_examples(lam, psi, expected):
    assert subsolution_margin(_diag_point(lam, psi)) == pytest.approx(expected)


@pytest.mark.parametrize("lam,psi,expected", [((1.0, 1.0), 1.0, 1.0), ((1.0, 1.0), 3.0, -1.0),
                                              ((1.0, 1.0, 1.0), 1.0, 1.0)])
def test_cone_margin_examples(lam, psi, expected):
    assert cone_margin(_diag_point(lam, psi)) == pytest.approx(expected)


@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0), st.floats(0.01, 5.0))
def test_cone_condition_in_two_dimensions_is_psi_below_two(l1, l2, psi):
    margin = cone_margin(_diag_point((l1, l2), psi))
    assert (margin > 0) == (psi < 2.0) or abs(psi - 2.0) < 1e-12


def test_concavity_probe_examples():
    assert concavity_probe(I2, I2) == 0.0
    assert concavity_probe(I2, np.diag([4.0, 1.0])) == pytest.approx(2.5 / 3.5 - 0.65, abs=1e-12)
    with pytest.raises(ValueError):
        concavity_probe(I2, np.diag([1.0, -1.0]))


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
@settings(max_examples=100, deadline=None)
def test_concavity_probe_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    a = random_pd(rng, n, 200)
    b = random_pd(rng, n, 200)
    assert np.min(concavity_probe(a, b)) >= -1e-12


def _lemma_example_fractions():
    # exact rational evaluation of the diagonal example with λ = (100, 100/199), ψ = 1
    lam = (Fraction(100), Fraction(100, 199))
    w = sum(lam)
    f = [1 / l - 1 / w for l in lam]
    fdiff = sum(fk * (1 - l) for fk, l in zip(f, lam))
    trace = sum(f)
    return f, fdiff, trace, fdiff - Fraction(3, 10) * (1 + trace)


def test_lemma_margin_diagonal_example():
    f_exact, fdiff, trace, margin = _lemma_example_fractions()
    assert float(f_exact[0]) == pytest.approx(5.0e-5)
    assert float(f_exact[1]) == pytest.approx(1.98005)
    assert float(fdiff) == pytest.approx(0.9801)
    p_sub = PointData(I2, Z2, I2, 1.0)
    p_sol = _diag_point((100.0, 100.0 / 199.0), 1.0)
    a, b = strict_concavity_terms(p_sub, p_sol)
    assert a == pytest.approx(float(fdiff), abs=1e-12)
    assert b == pytest.approx(float(trace), abs=1e-12)
    assert strict_concavity_margin(p_sub, p_sol, 0.3) == pytest.approx(float(margin), abs=1e-12)
    assert strict_concavity_margin(p_sub, p_sol, 0.3) == pytest.approx(0.08607, abs=1e-5)


def test_lemma_margin_equality_case():
    p = PointData(I2, Z2, I2, 1.0)
    assert strict_concavity_margin(p, p, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_lemma_margin_preconditions():
    p_sub = PointData(I2, Z2, I2, 1.0)
    with pytest.raises(ValueError, match="equation"):
        strict_concavity_margin(p_sub, PointData(I2, Z2, 2 * I2, 1.0), 0.1)
    with pytest.raises(ValueError, match="share"):
        strict_concavity_margin(PointData(2 * I2, Z2, I2, 1.0), p_sub, 0.1)
    # for n = 2 the cone condition fails whenever ψ >= 2
    sol = _diag_point((3.0, 3.0), 3.0)
    with pytest.raises(ValueError, match="cone"):
        strict_concavity_margin(PointData(I2, Z2, 4.0 * I2, 3.0), sol, 0.1)


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
@settings(max_examples=50, deadline=None)
def test_weak_lemma_holds_for_subsolutions(seed, n):
    rng = np.random.default_rng(seed)
    _, g = random_metric(rng, n, 1)
    sol = random_pd(rng, n, 1, 0.1, 10.0)
    psi = equation_psi(g, np.zeros_like(sol), sol)
    # a subsolution: any admissible ū with larger χ_ū in the Loewner order
    sub = sol + random_pd(rng, n, 1, 1e-3, 5.0)
    p_sub = PointData(g, np.zeros_like(sol), sub, psi)
    p_sol = PointData(g, np.zeros_like(sol), sol, psi)
    assert subsolution_margin(p_sub)[0] >= 0
    assert strict_concavity_margin(p_sub, p_sol, 0.0, check=False)[0] >= -1e-10
