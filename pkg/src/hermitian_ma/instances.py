"""Random pointwise instances and the brute-force calibration of the strict
concavity constants (θ, N).

Pencil eigenvalues of the unknown are drawn log-uniformly in [1e-2, 1e3] and
rotated by a random unitary; an equation-satisfying instance fixes n−1 of
them and solves n Πλ = ψ Σλ for the last, rejecting samples whose root is
negative or leaves the sampling range.  Subsolutions are ε-pinched
(ε ω ≤ χ_ū ≤ ε⁻¹ ω) and must satisfy both the subsolution and the cone
inequality at the same ψ.
"""

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .pointwise import PointData, cone_margin_from_eigenvalues, strict_concavity_terms

__all__ = [
    "EIG_RANGE",
    "random_unitary",
    "random_metric",
    "random_pd",
    "sample_equation_eigenvalues",
    "LemmaSample",
    "sample_lemma_instances",
    "lemma_ratio",
    "count_violations",
    "calibrate_strict_concavity",
    "LemmaCalibrator",
]

logger = logging.getLogger(__name__)

EIG_RANGE = (1e-2, 1e3)


def random_unitary(rng, n, size):
    """Haar-distributed unitaries, shape (size, n, n)."""
    z = (rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def random_metric(rng, n, size, spread=0.3):
    """Well-conditioned random Hermitian metrics g = B B^H with B = I + spread·noise."""
    noise = rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))
    b = np.eye(n) + spread / np.sqrt(2 * n) * noise
    return b, b @ np.conj(np.swapaxes(b, -1, -2))


def _rotate(u, lam):
    return np.einsum("...ik,...k,...jk->...ij", u, lam, np.conj(u))


def random_pd(rng, n, size, lo=EIG_RANGE[0], hi=EIG_RANGE[1]):
    """Hermitian positive definite matrices with log-uniform spectrum in [lo, hi]."""
    if not 0 < lo <= hi:
        raise ValueError(f"need 0 < lo <= hi, got lo={lo}, hi={hi}")
    lam = np.exp(rng.uniform(np.log(lo), np.log(hi), (size, n)))
    return _rotate(random_unitary(rng, n, size), lam)


def sample_equation_eigenvalues(rng, n, size, psi, lo=EIG_RANGE[0], hi=EIG_RANGE[1]):
    """Eigenvalues solving n Πλ = ψ Σλ; returns (lam, ok) where ok marks accepted rows."""
    fixed = np.exp(rng.uniform(np.log(lo), np.log(hi), (size, n - 1)))
    prod = np.prod(fixed, axis=-1)
    total = np.sum(fixed, axis=-1)
    den = n * prod - psi
    ok = den > 0
    last = np.where(ok, psi * total / np.where(ok, den, 1.0), 1.0)
    ok &= (last >= lo) & (last <= hi)
    return np.concatenate([fixed, last[:, None]], axis=-1), ok


@dataclass
class LemmaSample:
    """Paired pointwise instances: the solution point and the subsolution point.

    Both share g, χ (= 0) and ψ; ``gtilde`` and ``gsub`` are χ_u and χ_ū.
    """

    g: np.ndarray
    gtilde: np.ndarray
    gsub: np.ndarray
    psi: np.ndarray
    w: np.ndarray

    def __len__(self):
        return len(self.psi)

    def points(self):
        chi = np.zeros_like(self.gtilde)
        return (PointData(self.g, chi, self.gsub, self.psi),
                PointData(self.g, chi, self.gtilde, self.psi))

    @classmethod
    def concatenate(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("g", "gtilde", "gsub", "psi", "w")))

    def take(self, idx):
        return LemmaSample(self.g[idx], self.gtilde[idx], self.gsub[idx], self.psi[idx], self.w[idx])


def _draw_batch(rng, n, batch, epsilon, sup_psi, n_min, extremal):
    if extremal:
        # corners of the pinching box, ψ at the largest admissible value,
        # ū aligned with the eigenbasis of χ_u up to a permutation
        mu = np.where(rng.random((batch, n)) < 0.5, epsilon, 1.0 / epsilon)
        jitter = np.exp(rng.uniform(-0.02, 0.02, (batch, n)))
        mu = np.clip(mu * jitter, epsilon, 1.0 / epsilon)
    else:
        mu = np.exp(rng.uniform(np.log(epsilon), np.log(1.0 / epsilon), (batch, n)))
    psi_sub = n * np.prod(mu, axis=-1) / np.sum(mu, axis=-1)
    if extremal:
        psi = np.minimum(sup_psi, psi_sub) * (1.0 - 1e-3 * rng.random(batch))
    else:
        psi = sup_psi * (1.0 - rng.random(batch))  # uniform on (0, sup_psi]
    ok = n * np.prod(mu, axis=-1) >= psi * np.sum(mu, axis=-1)
    ok &= cone_margin_from_eigenvalues(np.sort(mu, axis=-1), psi) > 0
    lam, ok_eq = sample_equation_eigenvalues(rng, n, batch, psi)
    ok &= ok_eq
    w = np.sum(lam, axis=-1)
    ok &= w >= n_min
    idx = np.nonzero(ok)[0]
    k = len(idx)
    if k == 0:
        return None
    u = random_unitary(rng, n, k)
    if extremal:
        perm = np.argsort(rng.random((k, n)), axis=-1)
        phases = np.exp(2j * np.pi * rng.random((k, n)))
        small = np.eye(n) + 0.01 * (rng.standard_normal((k, n, n)) + 1j * rng.standard_normal((k, n, n)))
        v = np.einsum("kij,kj->kij", np.take_along_axis(u, perm[:, None, :], axis=-1), phases)
        v, _ = np.linalg.qr(v @ small)
    else:
        v = random_unitary(rng, n, k)
    b, g = random_metric(rng, n, k)
    bh = np.conj(np.swapaxes(b, -1, -2))
    gtilde = b @ _rotate(u, lam[idx]) @ bh
    gsub = b @ _rotate(v, mu[idx]) @ bh
    return LemmaSample(g, 0.5 * (gtilde + np.conj(np.swapaxes(gtilde, -1, -2))),
                       0.5 * (gsub + np.conj(np.swapaxes(gsub, -1, -2))), psi[idx], w[idx])


def sample_lemma_instances(rng, n, size, epsilon=0.5, sup_psi=1.0, n_min=0.0,
                           extremal_fraction=0.0, max_draws=None):
    """Draw ``size`` paired instances with W ≥ n_min.

    Returns None when fewer than ``size`` instances are accepted within
    ``max_draws`` raw draws (default 200·size), i.e. the threshold is out of
    reach of the sampling range.
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if sup_psi <= 0:
        raise ValueError("sup_psi must be positive")
    max_draws = 200 * size if max_draws is None else max_draws
    n_ext = int(round(extremal_fraction * size))
    targets = [(False, size - n_ext), (True, n_ext)]
    parts = []
    for extremal, target in targets:
        got, drawn = 0, 0
        batch = max(1024, 2 * target)
        while got < target:
            if drawn >= max_draws:
                return None
            part = _draw_batch(rng, n, batch, epsilon, sup_psi, n_min, extremal)
            drawn += batch
            if part is not None:
                parts.append(part)
                got += len(part)
        # trim the last batch so the total for this stream is exact
        excess = got - target
        if excess:
            parts[-1] = parts[-1].take(slice(0, len(parts[-1]) - excess))
    return LemmaSample.concatenate([p for p in parts if len(p)])


def lemma_ratio(sample):
    """F^{ij̄}(ū − u)_{ij̄} / (1 + F^{ij̄} g_{ij̄}); the largest admissible θ per instance."""
    p_sub, p_sol = sample.points()
    a, b = strict_concavity_terms(p_sub, p_sol)
    return a / (1.0 + b)


def count_violations(sample, theta, n_min=0.0):
    """Instances with W ≥ n_min where F(ū − u) < θ(1 + F g)."""
    p_sub, p_sol = sample.points()
    a, b = strict_concavity_terms(p_sub, p_sol)
    mask = sample.w >= n_min
    return int(np.count_nonzero((a - theta * (1.0 + b) < 0) & mask))


def calibrate_strict_concavity(n, epsilon=0.5, sup_psi=1.0, n_grid=(10.0, 100.0, 1000.0),
                      theta_step=0.01, pilot_size=20000, extremal_fraction=0.5, seed=0):
    """Grid search for (θ*, N*): the largest θ on the grid with no pilot violation.

    Thresholds whose pilot sample cannot be filled are skipped.  Returns
    ``(theta, N, details)`` where details maps N to (θ_N, pilot minimum ratio)
    or None for skipped thresholds; θ is None when no threshold admits θ > 0.
    """
    rng = np.random.default_rng(seed)
    details = {}
    best = (None, None)
    for n_min in n_grid:
        pilot = sample_lemma_instances(rng, n, pilot_size, epsilon, sup_psi, n_min,
                                       extremal_fraction=extremal_fraction)
        if pilot is None:
            logger.info("N = %g unreachable within the sampling range; skipped", n_min)
            details[n_min] = None
            continue
        ratio_min = float(np.min(lemma_ratio(pilot)))
        k = int(np.floor(ratio_min / theta_step + 1e-9))
        theta = k * theta_step if k > 0 else None
        # descending scan confirms the pick (ratio is linear in θ, so the floor is exact)
        while theta is not None and count_violations(pilot, theta) > 0:
            k -= 1
            theta = k * theta_step if k > 0 else None
        details[n_min] = (theta, ratio_min)
        if theta is not None and (best[0] is None or theta > best[0] + 1e-12):
            best = (theta, n_min)
    return best[0], best[1], details


class LemmaCalibrator(BaseEstimator):
    """Estimator wrapper around the (θ, N) calibration.

    ``fit`` runs the pilot grid search and stores ``theta_``, ``n_threshold_``
    and ``details_``.  ``predict`` flags instances that satisfy the strict
    concavity inequality at the fitted constants (True for instances below the
    threshold, where nothing is asserted).
    """

    def __init__(self, n=2, epsilon=0.5, sup_psi=1.0, n_grid=(10.0, 100.0, 1000.0),
                 theta_step=0.01, pilot_size=20000, extremal_fraction=0.5, random_state=0):
        self.n = n
        self.epsilon = epsilon
        self.sup_psi = sup_psi
        self.n_grid = n_grid
        self.theta_step = theta_step
        self.pilot_size = pilot_size
        self.extremal_fraction = extremal_fraction
        self.random_state = random_state

    def fit(self, X=None, y=None):
        theta, n_thr, details = calibrate_strict_concavity(
            self.n, self.epsilon, self.sup_psi, self.n_grid, self.theta_step,
            self.pilot_size, self.extremal_fraction, self.random_state)
        if theta is None:
            raise RuntimeError(f"no θ > 0 found on the grid; pilot details: {details}")
        self.theta_ = theta
        self.n_threshold_ = n_thr
        self.details_ = details
        return self

    def predict(self, sample):
        check_is_fitted(self, "theta_")
        p_sub, p_sol = sample.points()
        a, b = strict_concavity_terms(p_sub, p_sol)
        return (a - self.theta_ * (1.0 + b) >= 0) | (sample.w < self.n_threshold_)

    def count_violations(self, sample):
        check_is_fitted(self, "theta_")
        return count_violations(sample, self.theta_, self.n_threshold_)
