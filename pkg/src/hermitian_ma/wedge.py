"""Exterior-algebra expansion of wedge products of real (1,1)-forms on C^n.

A Hermitian matrix ``a`` stands for the form Σ a_{ij} (√−1/2) dz_i ∧ dz̄_j.
Since these 2-forms commute, the top-degree product of a_1, ..., a_n expands
over pairs of permutations (σ, τ) of the holomorphic and antiholomorphic
indices:

    a_1 ∧ ... ∧ a_n = [Σ_{σ,τ} sgn(σ) sgn(τ) Π_m a_m[σ(m), τ(m)]] β_1 ∧ ... ∧ β_n

with β_k = (√−1/2) dz_k ∧ dz̄_k.  Products of degree n−1 are reported through
their pairing with every elementary form e_{ab} = (√−1/2) dz_a ∧ dz̄_b.

This module deliberately avoids eigenvalues and determinants: it is the
independent route against which the eigenvalue formulas of the pointwise
module are checked.
"""

from functools import lru_cache
from itertools import permutations

import numpy as np

__all__ = [
    "wedge_oracle",
    "top_coefficient",
    "pairing_matrix",
    "subsolution_margin_oracle",
    "cone_margin_oracle",
]


def _perm_sign(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def _signed_pairs(n):
    perms = [(np.array(p), _perm_sign(p)) for p in permutations(range(n))]
    return [(s, t, ss * st) for s, ss in perms for t, st in perms]


def top_coefficient(mats):
    """Coefficient of a_1 ∧ ... ∧ a_n relative to β_1 ∧ ... ∧ β_n.

    ``mats`` is a sequence of n arrays of shape (..., n, n) (batch axes broadcast).
    """
    mats = [np.asarray(a, dtype=np.complex128) for a in mats]
    n = mats[0].shape[-1]
    if len(mats) != n:
        raise ValueError(f"need exactly {n} factors for a top-degree product, got {len(mats)}")
    batch = np.broadcast_shapes(*(a.shape[:-2] for a in mats))
    total = np.zeros(batch, dtype=np.complex128)
    idx = np.arange(n)
    for s, t, sign in _signed_pairs(n):
        term = np.ones(batch, dtype=np.complex128)
        for m in idx:
            term = term * mats[m][..., s[m], t[m]]
        total += sign * term
    return total


def pairing_matrix(mats, n):
    """M[..., a, b] = coefficient of (a_1 ∧ ... ∧ a_{n-1}) ∧ e_{ab} relative to β_1 ∧ ... ∧ β_n."""
    if len(mats) != n - 1:
        raise ValueError(f"need exactly {n - 1} factors, got {len(mats)}")
    mats = [np.asarray(a, dtype=np.complex128) for a in mats]
    batch = np.broadcast_shapes(*(a.shape[:-2] for a in mats)) if mats else ()
    out = np.zeros(batch + (n, n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            unit = np.zeros((n, n), dtype=np.complex128)
            unit[a, b] = 1.0
            out[..., a, b] = top_coefficient(list(mats) + [unit])
    return out


def _expand(factors):
    mats = []
    for a, mult in factors:
        if int(mult) != mult or mult < 0:
            raise ValueError("multiplicities must be non-negative integers")
        mats.extend([a] * int(mult))
    return mats


def wedge_oracle(factors, n):
    """Wedge product of (1,1)-forms given as ``[(matrix, multiplicity), ...]``.

    Total multiplicity n gives the scalar coefficient relative to
    β_1 ∧ ... ∧ β_n; total multiplicity n−1 gives the pairing matrix with the
    elementary (1,1)-forms (see :func:`pairing_matrix`).
    """
    if n not in (2, 3):
        raise ValueError(f"wedge oracle supports n in {{2, 3}}, got {n}")
    mats = _expand(factors)
    for a in mats:
        if np.shape(a)[-2:] != (n, n):
            raise ValueError(f"factor has shape {np.shape(a)}, expected (..., {n}, {n})")
    if len(mats) == n:
        return top_coefficient(mats)
    if len(mats) == n - 1:
        return pairing_matrix(mats, n)
    raise ValueError(f"unsupported degree {len(mats)} for n = {n}; expected {n} or {n - 1}")


def subsolution_margin_oracle(g, chi_u, psi):
    """(χ_u^n − ψ χ_u ∧ ω^{n-1}) / ω^n, matching det(g^{-1}χ_u) − (ψ/n) tr_g χ_u."""
    n = np.shape(g)[-1]
    vol = np.real(wedge_oracle([(g, n)], n))
    lhs = np.real(wedge_oracle([(chi_u, n)], n))
    rhs = np.real(wedge_oracle([(chi_u, 1), (g, n - 1)], n))
    return (lhs - np.asarray(psi) * rhs) / vol


def cone_margin_oracle(g, chi_u, psi):
    """Smallest eigenvalue of n(n χ^{n-1} − (n−1) ψ χ ∧ ω^{n-2}) paired against (1,0)-covectors.

    The (n−1, n−1)-form is positive iff its pairing matrix is positive definite
    with respect to the dual metric on covectors; normalizing by ω^n makes the
    value coincide with the eigenvalue formula of the cone margin.
    """
    n = np.shape(g)[-1]
    psi = np.asarray(psi, dtype=float)
    vol = np.real(wedge_oracle([(g, n)], n))
    x = wedge_oracle([(chi_u, n - 1)], n)
    y = wedge_oracle([(chi_u, 1), (g, n - 2)], n)
    m = n * (n * x - (n - 1) * psi[..., None, None] * y) / vol[..., None, None]
    m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
    # dual metric on covectors: |ξ|^2 = Σ g^{ab̄} ξ_a ξ̄_b = w^H conj(g^{-1}) w with w = conj(ξ)
    dual = np.conj(np.linalg.inv(np.asarray(g, dtype=np.complex128)))
    dual = 0.5 * (dual + np.conj(np.swapaxes(dual, -1, -2)))
    low = np.linalg.cholesky(dual)
    y1 = np.linalg.solve(low, m)
    red = np.linalg.solve(low, np.conj(np.swapaxes(y1, -1, -2)))
    red = 0.5 * (red + np.conj(np.swapaxes(red, -1, -2)))
    return np.linalg.eigvalsh(red)[..., 0]
