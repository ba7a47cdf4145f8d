"""Per-point algebra of the equation det 𝔤 = (ψ/n) W det g.

Everything here works on batches: matrices have shape (..., n, n) and scalars
shape (...).  A point is described by the background metric g, the form χ,
the complex Hessian u_{ij̄} of the unknown and the right-hand side ψ; the
matrix 𝔤 = χ + u_{ij̄} is compared with g through the generalized
eigenvalues of the pencil (𝔤, g).

The linearized coefficients F^{ij̄} are stored as the matrix
``F = inv(𝔤) − inv(g)/W`` and contracted against a Hermitian matrix ``a``
as ``tr(F a)`` (see :func:`contract`), which is the directional derivative of
the log-form residual in the direction ``a``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_hermitian, check_positive_definite

__all__ = [
    "ADMISSIBILITY_RTOL",
    "NotAdmissibleError",
    "PointData",
    "hermitian",
    "contract",
    "assemble_gtilde",
    "pencil_eigenvalues",
    "pencil_decomposition",
    "admissibility_margin",
    "is_admissible",
    "residual_point",
    "linearization_coeffs",
    "equation_psi",
    "subsolution_margin",
    "cone_margin",
    "cone_margin_from_eigenvalues",
    "concavity_probe",
    "det_over_trace_root",
    "strict_concavity_margin",
    "strict_concavity_terms",
]

# λ_min must exceed this fraction of the mean pencil eigenvalue.
ADMISSIBILITY_RTOL = 1e-10


class NotAdmissibleError(ValueError):
    """Raised when 𝔤 is not positive definite relative to g where it must be."""


def hermitian(a):
    a = np.asarray(a, dtype=np.complex128)
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def contract(f, a):
    """Σ F^{ij̄} a_{ij̄} = Re tr(F a) for Hermitian F and a."""
    return np.real(np.einsum("...ij,...ji->...", f, a))


@dataclass
class PointData:
    """Pointwise data of the equation; all fields may carry leading batch axes."""

    g: np.ndarray
    chi: np.ndarray
    hess_u: np.ndarray
    psi: np.ndarray | float = 1.0

    def __post_init__(self):
        self.g = check_positive_definite(self.g, "g")
        self.chi = check_hermitian(self.chi, "chi")
        self.hess_u = check_hermitian(self.hess_u, "hess_u")
        self.psi = np.asarray(self.psi, dtype=float)
        if self.g.shape[-1] != self.chi.shape[-1] or self.g.shape[-1] != self.hess_u.shape[-1]:
            raise ValueError("g, chi and hess_u must share the matrix dimension")

    @property
    def n(self):
        return self.g.shape[-1]

    @property
    def gtilde(self):
        return assemble_gtilde(self.chi, self.hess_u)

    @property
    def w(self):
        """W = tr_g 𝔤."""
        return np.sum(pencil_eigenvalues(self.g, self.gtilde), axis=-1)


def assemble_gtilde(chi, hess_u):
    chi = np.asarray(chi)
    hess_u = np.asarray(hess_u)
    if chi.shape[-2:] != hess_u.shape[-2:]:
        raise ValueError(f"dimension mismatch: chi {chi.shape[-2:]} vs hess_u {hess_u.shape[-2:]}")
    return hermitian(chi + hess_u)


def _reduce(g, a):
    """Cholesky reduction L^{-1} a L^{-H} with g = L L^H; returns (reduced, L)."""
    low = np.linalg.cholesky(g)
    y = np.linalg.solve(low, a)
    red = np.linalg.solve(low, np.conj(np.swapaxes(y, -1, -2)))
    return hermitian(red), low


def pencil_eigenvalues(g, a):
    """Generalized eigenvalues of a relative to g, ascending along the last axis."""
    red, _ = _reduce(np.asarray(g, dtype=np.complex128), np.asarray(a, dtype=np.complex128))
    return np.linalg.eigvalsh(red)


def pencil_decomposition(g, a):
    """Eigen-decomposition of the pencil: returns (lam, basis) with a = g B diag(lam) B^H g.

    ``basis`` (shape (..., n, n)) holds g-orthonormal eigenvectors as columns,
    i.e. B^H g B = I and B^H a B = diag(lam).
    """
    red, low = _reduce(np.asarray(g, dtype=np.complex128), np.asarray(a, dtype=np.complex128))
    lam, vec = np.linalg.eigh(red)
    basis = np.linalg.solve(np.conj(np.swapaxes(low, -1, -2)), vec)
    return lam, basis


def admissibility_margin(p):
    """Smallest eigenvalue of 𝔤 relative to g; the point is admissible iff positive."""
    return pencil_eigenvalues(p.g, p.gtilde)[..., 0]


def _admissible_lam(lam):
    return lam[..., 0] > ADMISSIBILITY_RTOL * np.sum(lam, axis=-1) / lam.shape[-1]


def is_admissible(p):
    return _admissible_lam(pencil_eigenvalues(p.g, p.gtilde))


def _require_admissible(lam, what="point"):
    ok = _admissible_lam(lam)
    if not np.all(ok):
        bad = np.argwhere(~np.atleast_1d(ok))
        raise NotAdmissibleError(
            f"{what} is not admissible (λ_min = {np.min(lam[..., 0]):.3e}) at batch index {tuple(bad[0])}")


def residual_point(p):
    """r = log det(g^{-1}𝔤) − log tr_g 𝔤 − log(ψ/n); zero iff the equation holds."""
    lam = pencil_eigenvalues(p.g, p.gtilde)
    _require_admissible(lam)
    psi = p.psi
    if np.any(psi <= 0):
        raise ValueError("psi must be positive")
    n = lam.shape[-1]
    return np.sum(np.log(lam), axis=-1) - np.log(np.sum(lam, axis=-1)) - np.log(psi / n)


def linearization_coeffs(p):
    """F = 𝔤^{-1} − g^{-1}/W as a matrix, contracted via :func:`contract`."""
    gt = p.gtilde
    lam, basis = pencil_decomposition(p.g, gt)
    _require_admissible(lam)
    w = np.sum(lam, axis=-1)
    # 𝔤^{-1} = B diag(1/λ) B^H and g^{-1} = B B^H
    weights = 1.0 / lam - 1.0 / w[..., None]
    f = np.einsum("...ik,...k,...jk->...ij", basis, weights, np.conj(basis))
    return hermitian(f)


def equation_psi(g, chi, hess_u):
    """The ψ that makes (g, χ, u_{ij̄}) an exact solution: n det(g^{-1}𝔤) / tr_g 𝔤."""
    lam = pencil_eigenvalues(check_positive_definite(g, "g"), assemble_gtilde(chi, hess_u))
    _require_admissible(lam)
    n = lam.shape[-1]
    return n * np.prod(lam, axis=-1) / np.sum(lam, axis=-1)


def subsolution_margin(p):
    """det(g^{-1}𝔤̄) − (ψ/n) tr_g 𝔤̄; ū is a subsolution at the point iff ≥ 0."""
    lam = pencil_eigenvalues(p.g, p.gtilde)
    n = lam.shape[-1]
    return np.prod(lam, axis=-1) - p.psi / n * np.sum(lam, axis=-1)


def cone_margin_from_eigenvalues(lam, psi):
    n = lam.shape[-1]
    total = np.sum(lam, axis=-1, keepdims=True)
    others_sum = total - lam
    others_prod = np.stack(
        [np.prod(np.delete(lam, i, axis=-1), axis=-1) for i in range(n)], axis=-1)
    psi = np.asarray(psi, dtype=float)[..., None]
    return np.min(n * others_prod - psi * others_sum, axis=-1)


def cone_margin(p):
    """min_i [n Π_{k≠i} λ_k − ψ Σ_{j≠i} λ_j] over the pencil of 𝔤̄ relative to g."""
    if p.n < 2:
        raise ValueError("cone condition needs n >= 2")
    return cone_margin_from_eigenvalues(pencil_eigenvalues(p.g, p.gtilde), p.psi)


def det_over_trace_root(a):
    """(det A / tr A)^{1/(n-1)} for Hermitian positive definite A."""
    a = np.asarray(a, dtype=np.complex128)
    lam = np.linalg.eigvalsh(hermitian(a))
    if np.any(lam[..., 0] <= 0):
        raise ValueError("matrix is not positive definite")
    n = lam.shape[-1]
    return (np.prod(lam, axis=-1) / np.sum(lam, axis=-1)) ** (1.0 / (n - 1))


def concavity_probe(a, b):
    """G((A+B)/2) − (G(A) + G(B))/2; nonnegative when G is concave."""
    mid = 0.5 * (np.asarray(a) + np.asarray(b))
    return det_over_trace_root(mid) - 0.5 * (det_over_trace_root(a) + det_over_trace_root(b))


def strict_concavity_terms(p_sub, p_sol):
    """(F^{ij̄}(ū − u)_{ij̄}, F^{ij̄} g_{ij̄}) with F taken at the solution point."""
    f = linearization_coeffs(p_sol)
    return contract(f, p_sub.hess_u - p_sol.hess_u), contract(f, p_sol.g)


def strict_concavity_margin(p_sub, p_sol, theta, check=True):
    """F^{ij̄}(ū_{ij̄} − u_{ij̄}) − θ (1 + F^{ij̄} g_{ij̄}).

    With ``check`` the preconditions are enforced: the solution point solves
    the equation to 1e-10, both points share g, χ and ψ, and ū satisfies the
    cone condition.
    """
    if check:
        if np.max(np.abs(residual_point(p_sol)), initial=0.0) > 1e-10:
            raise ValueError("p_sol does not satisfy the equation to 1e-10")
        same = (np.allclose(p_sub.g, p_sol.g, rtol=0, atol=1e-12)
                and np.allclose(p_sub.chi, p_sol.chi, rtol=0, atol=1e-12)
                and np.allclose(p_sub.psi, p_sol.psi, rtol=0, atol=1e-12))
        if not same:
            raise ValueError("p_sub and p_sol must share g, chi and psi")
        if np.any(cone_margin(p_sub) <= 0):
            raise ValueError("p_sub violates the cone condition")
    a, b = strict_concavity_terms(p_sub, p_sol)
    return a - theta * (1.0 + b)

